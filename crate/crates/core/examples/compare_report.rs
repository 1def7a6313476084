//! A direct-versus-hierarchical and a direct-versus-incremental comparison on
//! synthetic data, printed as a table and as JSON.

use elmnet::data::{synthetic_blobs, Split};
use elmnet::eval::{run_comparison, ComparisonConfig, Variant};
use elmnet::model::ActivationKind;
use elmnet::solvers::RidgeConfig;

fn main() -> elmnet::error::Result<()> {
    let train = synthetic_blobs(11, 2000, 12, 6, 0.25)?.with_name("blobs");
    let test = synthetic_blobs(12, 1000, 12, 6, 0.25)?.with_split(Split::Test);

    let mut cfg = ComparisonConfig {
        activation: ActivationKind::Sigmoid,
        ridge: RidgeConfig::default(),
        seed: 0,
        repeats: 3,
        threads: None,
        variant: Variant::Hierarchical("300,300".parse()?),
    };
    let report = run_comparison(&train, &test, &cfg)?;
    print!("{report}");

    cfg.variant = Variant::Incremental(vec![200, 200, 200]);
    let report = run_comparison(&train, &test, &cfg)?;
    println!();
    print!("{report}");
    println!("{}", report.to_json());
    Ok(())
}
