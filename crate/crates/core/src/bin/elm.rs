fn main() {
    std::process::exit(elmnet::cli::main_with_args(std::env::args_os()));
}
