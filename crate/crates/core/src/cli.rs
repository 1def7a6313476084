//! The `elm` command line.
//!
//! ```text
//! elm train                --format csv --train a.csv --test b.csv --neurons 4000
//! elm compare-hierarchical --format idx --train IMAGES LABELS --test IMAGES LABELS --partition "[[1000,1000],[1000,1000]]"
//! elm compare-incremental  --format blobs --train-samples 5000 --increments 2000+2000
//! elm selftest             --trials 200
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or malformed input, 3 numeric
//! failure (including a failed self-test).

use std::ffi::OsString;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use faer::Mat;

use crate::data::{self, Dataset, LabelColumn, Split};
use crate::error::{ElmError, Result};
use crate::eval::{self, BenchReport, ComparisonConfig, TrainConfig, Variant};
use crate::model::{ActivationKind, OutputWeight};
use crate::selftest::{self, Fault, SelftestConfig};
use crate::solvers::{PartitionTree, RidgeConfig, DEFAULT_ALPHA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Overrides `--threads` when set.
pub const THREADS_ENV: &str = "ELM_THREADS";

pub const DEFAULT_NEURONS: usize = 4000;

/// First 8 bytes of a weight dump.
pub const WEIGHT_MAGIC: [u8; 8] = *b"ELMWGT01";

#[derive(Debug, Parser)]
#[command(name = "elm", version, about = "Random-feature network training with exact subnetwork merging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network directly and report its test error.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the output weight here (see `WEIGHT_MAGIC`).
        #[arg(long, value_name = "PATH")]
        weights: Option<PathBuf>,
    },
    /// Direct training against split-and-merge training on the same features.
    CompareHierarchical {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma list for one level, brackets for deeper trees, for example
        /// "2000,2000" or "[[1000,1000],[1000,1000]]". Defaults to two equal
        /// halves of --neurons.
        #[arg(long, value_name = "SPEC")]
        partition: Option<String>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Retraining from scratch against incremental growth.
    CompareIncremental {
        #[command(flatten)]
        common: CommonArgs,
        /// Block sizes joined by '+' or ',', first block first, for example
        /// "2000+2000". Defaults to two equal halves of --neurons; an empty
        /// string trains one network directly.
        #[arg(long, value_name = "SPEC")]
        increments: Option<String>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Randomized invariant checks; exits 0 only if all pass.
    Selftest {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    SignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// One sample per row, integer label in --label-column.
    Csv,
    /// IDX image and label files, given as two paths.
    Idx,
    /// Synthetic Gaussian clusters; no files.
    Blobs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Training data: one CSV file, or IDX images then labels.
    #[arg(long, num_args = 1..=2, value_name = "PATH")]
    pub train: Vec<PathBuf>,
    #[arg(long, num_args = 1..=2, value_name = "PATH")]
    pub test: Vec<PathBuf>,
    /// "last" or a zero-based index.
    #[arg(long, default_value = "last")]
    pub label_column: LabelColumn,
    /// The CSV files start with a header row.
    #[arg(long)]
    pub header: bool,
    /// Scale every feature onto [0, 1] using training minima and maxima.
    #[arg(long)]
    pub normalize: bool,
    /// Keep only the first N training samples.
    #[arg(long, value_name = "N")]
    pub train_limit: Option<usize>,
    /// Dataset name in reports; defaults to the training file name.
    #[arg(long)]
    pub name: Option<String>,

    #[arg(long, default_value_t = 2000, help_heading = "Synthetic data")]
    pub train_samples: usize,
    #[arg(long, default_value_t = 1000, help_heading = "Synthetic data")]
    pub test_samples: usize,
    #[arg(long, default_value_t = 8, help_heading = "Synthetic data")]
    pub dim: usize,
    #[arg(long, default_value_t = 4, help_heading = "Synthetic data")]
    pub classes: usize,
    #[arg(long, default_value_t = 0.3, help_heading = "Synthetic data")]
    pub spread: f64,
    #[arg(long, default_value_t = 1, help_heading = "Synthetic data")]
    pub data_seed: u64,

    /// sigmoid or radbas.
    #[arg(long, default_value = "sigmoid")]
    pub activation: ActivationKind,
    /// Hidden neurons; defaults to the partition or schedule total, else 4000.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub neurons: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; ELM_THREADS overrides. Defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
}

/// Where the data comes from, checked but not yet read.
#[derive(Debug, Clone, PartialEq)]
enum Source {
    Csv { train: PathBuf, test: PathBuf, label_column: LabelColumn, header: bool },
    Idx { train: [PathBuf; 2], test: [PathBuf; 2] },
    Blobs { train: usize, test: usize, dim: usize, classes: usize, spread: f64, seed: u64 },
}

/// Validated settings shared by the training commands.
#[derive(Debug, Clone, PartialEq)]
struct Plan {
    source: Source,
    normalize: bool,
    train_limit: Option<usize>,
    name: Option<String>,
    activation: ActivationKind,
    ridge: RidgeConfig,
    seed: u64,
    threads: Option<usize>,
    output: Option<PathBuf>,
    json: bool,
}

fn usage(msg: impl Into<String>) -> ElmError {
    ElmError::InvalidArgument(msg.into())
}

/// `flag`, unless `env` holds a value.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    let threads = match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(v) => Some(v.parse().map_err(|_| usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?),
        None => flag,
    };
    if threads == Some(0) {
        return Err(usage("threads must be at least 1"));
    }
    Ok(threads)
}

/// Parses "2000+2000" or "2000,2000". An empty string gives an empty list.
pub fn parse_increments(spec: &str) -> Result<Vec<usize>> {
    if spec.trim().is_empty() {
        return Ok(Vec::new());
    }
    spec.split(['+', ','])
        .map(|part| match part.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(usage(format!("bad block size {part:?} in increments {spec:?}"))),
        })
        .collect()
}

fn two_paths(flag: &str, paths: &[PathBuf]) -> Result<[PathBuf; 2]> {
    match paths {
        [images, labels] => Ok([images.clone(), labels.clone()]),
        _ => Err(usage(format!("--format idx needs --{flag} IMAGES LABELS"))),
    }
}

fn one_path(flag: &str, paths: &[PathBuf]) -> Result<PathBuf> {
    match paths {
        [path] => Ok(path.clone()),
        _ => Err(usage(format!("--format csv needs exactly one --{flag} path"))),
    }
}

fn plan(args: &CommonArgs) -> Result<Plan> {
    let source = match args.format {
        Format::Csv => Source::Csv {
            train: one_path("train", &args.train)?,
            test: one_path("test", &args.test)?,
            label_column: args.label_column,
            header: args.header,
        },
        Format::Idx => Source::Idx { train: two_paths("train", &args.train)?, test: two_paths("test", &args.test)? },
        Format::Blobs => {
            if !args.train.is_empty() || !args.test.is_empty() {
                return Err(usage("--format blobs takes no --train or --test paths"));
            }
            if args.classes == 0 || args.dim == 0 || args.train_samples < args.classes || args.test_samples == 0 {
                return Err(usage("synthetic data needs --classes, --dim and --test-samples >= 1 and --train-samples >= --classes"));
            }
            if !(args.spread.is_finite() && args.spread >= 0.0) {
                return Err(usage(format!("--spread must be finite and non-negative, got {}", args.spread)));
            }
            Source::Blobs {
                train: args.train_samples,
                test: args.test_samples,
                dim: args.dim,
                classes: args.classes,
                spread: args.spread,
                seed: args.data_seed,
            }
        }
    };
    if args.train_limit == Some(0) {
        return Err(usage("--train-limit must be at least 1"));
    }
    let env = std::env::var(THREADS_ENV).ok();
    Ok(Plan {
        source,
        normalize: args.normalize,
        train_limit: args.train_limit,
        name: args.name.clone(),
        activation: args.activation,
        ridge: RidgeConfig::new(args.alpha)?,
        seed: args.seed,
        threads: resolve_threads(args.threads, env.as_deref())?,
        output: args.output.clone(),
        json: args.json,
    })
}

/// Resolves the total neuron count against an optional block list.
fn neuron_total(flag: Option<u64>, blocks: Option<usize>) -> Result<usize> {
    let flag = flag.map(|n| usize::try_from(n).map_err(|_| usage("--neurons is too large"))).transpose()?;
    match (flag, blocks) {
        (Some(n), Some(total)) if n != total => {
            Err(usage(format!("--neurons {n} does not match the block sizes, which sum to {total}")))
        }
        (Some(n), _) => Ok(n),
        (None, Some(total)) => Ok(total),
        (None, None) => Ok(DEFAULT_NEURONS),
    }
}

fn halves(total: usize) -> Result<Vec<usize>> {
    if total < 2 {
        return Err(usage("splitting into two halves needs at least 2 neurons"));
    }
    Ok(vec![total - total / 2, total / 2])
}

/// Makes both sets agree on the class count.
fn same_classes(train: Dataset, test: Dataset) -> Result<(Dataset, Dataset)> {
    let c = train.class_count().max(test.class_count());
    let widen = |d: Dataset| {
        if d.class_count() == c {
            Ok(d)
        } else {
            Dataset::new(d.features().to_owned(), d.labels().to_vec(), c, d.name(), d.split())
        }
    };
    Ok((widen(train)?, widen(test)?))
}

fn load(plan: &Plan) -> Result<(Dataset, Dataset)> {
    let (train, test) = match &plan.source {
        Source::Csv { train, test, label_column, header } => {
            data::load_csv_pair(train, test, *label_column, *header)?
        }
        Source::Idx { train, test } => {
            let a = data::load_idx(&train[0], &train[1])?;
            let b = data::load_idx(&test[0], &test[1])?.with_split(Split::Test);
            same_classes(a, b)?
        }
        Source::Blobs { train, test, dim, classes, spread, seed } => (
            data::synthetic_blobs(*seed, *train, *dim, *classes, *spread)?,
            data::synthetic_blobs(seed.wrapping_add(1), *test, *dim, *classes, *spread)?.with_split(Split::Test),
        ),
    };
    let train = match plan.train_limit {
        Some(n) => train.head(n)?,
        None => train,
    };
    let (train, test) = if plan.normalize { data::normalize_pair(&train, &test)? } else { (train, test) };
    Ok(match &plan.name {
        Some(name) => (train.with_name(name.clone()), test.with_name(name.clone())),
        None => (train, test),
    })
}

fn emit(plan: &Plan, report: &BenchReport, out: &mut dyn Write) -> Result<()> {
    let stdout = |e| ElmError::io("<stdout>", e);
    if plan.json {
        writeln!(out, "{}", report.to_json()).map_err(stdout)?;
    } else {
        write!(out, "{report}").map_err(stdout)?;
    }
    if let Some(path) = &plan.output {
        std::fs::write(path, report.to_json() + "\n").map_err(|e| ElmError::io(path, e))?;
    }
    Ok(())
}

fn train(plan: &Plan, neurons: usize, weights: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let (train, test) = load(plan)?;
    let cfg = TrainConfig { activation: plan.activation, neurons, ridge: plan.ridge, seed: plan.seed, threads: plan.threads };
    let net = eval::run_training(&train, &test, &cfg)?;
    emit(plan, &net.report, out)?;
    if let Some(path) = weights {
        write_weight_dump(path, &net.weight)?;
    }
    Ok(())
}

fn compare(plan: &Plan, variant: Variant, repeats: usize, out: &mut dyn Write) -> Result<()> {
    let cfg = ComparisonConfig {
        activation: plan.activation,
        ridge: plan.ridge,
        seed: plan.seed,
        repeats,
        threads: plan.threads,
        variant,
    };
    cfg.validate()?;
    let (train, test) = load(plan)?;
    emit(plan, &eval::run_comparison(&train, &test, &cfg)?, out)
}

/// Runs a parsed command, writing reports to `out`. Returns the exit code
/// for outcomes that are not errors.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Train { common, weights } => {
            let p = plan(common)?;
            train(&p, neuron_total(common.neurons, None)?, weights.as_deref(), out)?;
        }
        Command::CompareHierarchical { common, partition, repeats } => {
            let tree = partition.as_deref().map(str::parse::<PartitionTree>).transpose()?;
            let total = neuron_total(common.neurons, tree.as_ref().map(PartitionTree::total))?;
            let tree = match tree {
                Some(t) => t,
                None => PartitionTree::even(total, 2)?,
            };
            let p = plan(common)?;
            compare(&p, Variant::Hierarchical(tree), *repeats, out)?;
        }
        Command::CompareIncremental { common, increments, repeats } => {
            let blocks = increments.as_deref().map(parse_increments).transpose()?;
            let total = neuron_total(common.neurons, blocks.as_ref().filter(|b| !b.is_empty()).map(|b| b.iter().sum()))?;
            let p = plan(common)?;
            match blocks {
                Some(b) if b.is_empty() => train(&p, total, None, out)?,
                Some(b) => compare(&p, Variant::Incremental(b), *repeats, out)?,
                None => compare(&p, Variant::Incremental(halves(total)?), *repeats, out)?,
            }
        }
        Command::Selftest { trials, seed, inject_fault } => {
            if *trials == 0 {
                return Err(usage("--trials must be at least 1"));
            }
            let fault = inject_fault.map(|FaultArg::SignFlip| Fault::SignFlip);
            let summary = selftest::run_selftest(&SelftestConfig { trials: *trials, seed: *seed, fault });
            write!(out, "{summary}").map_err(|e| ElmError::io("<stdout>", e))?;
            return Ok(if summary.all_passed() { EXIT_OK } else { EXIT_NUMERIC });
        }
    }
    Ok(EXIT_OK)
}

pub fn exit_code(err: &ElmError) -> i32 {
    match err {
        ElmError::InvalidArgument(_) => EXIT_USAGE,
        ElmError::Io { .. } | ElmError::Format { .. } | ElmError::InvalidData(_) => EXIT_IO,
        ElmError::Numeric { .. } => EXIT_NUMERIC,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli, &mut io::stdout().lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("elm: {e}");
            exit_code(&e)
        }
    }
}

/// Writes `WEIGHT_MAGIC`, the row and column counts as little-endian `u64`,
/// then the entries as little-endian `f64` in row-major order.
pub fn write_weight_dump(path: impl AsRef<Path>, w: &OutputWeight) -> Result<()> {
    let path = path.as_ref();
    let v = w.values();
    let mut bytes = Vec::with_capacity(24 + 8 * v.nrows() * v.ncols());
    bytes.extend_from_slice(&WEIGHT_MAGIC);
    bytes.extend_from_slice(&(v.nrows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(v.ncols() as u64).to_le_bytes());
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            bytes.extend_from_slice(&v[(i, j)].to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| ElmError::io(path, e))
}

pub fn read_weight_dump(path: impl AsRef<Path>) -> Result<OutputWeight> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ElmError::io(path, e))?;
    if bytes.len() < 24 || bytes[..8] != WEIGHT_MAGIC {
        return Err(ElmError::format(path, "byte offset 0", "not a weight dump"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let expected = rows.checked_mul(cols).and_then(|k| k.checked_mul(8)).and_then(|k| k.checked_add(24));
    if expected != Some(bytes.len()) {
        return Err(ElmError::format(
            path,
            format!("byte offset {}", bytes.len()),
            format!("{rows} x {cols} weights need {expected:?} bytes"),
        ));
    }
    OutputWeight::new(Mat::from_fn(rows, cols, |i, j| f64::from_le_bytes(
        bytes[24 + 8 * (i * cols + j)..][..8].try_into().expect("8 bytes"),
    )))
}
