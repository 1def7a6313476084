//! Splits the hidden layer into a two-level tree, trains the leaves in
//! parallel and merges upward.

use std::time::Instant;

use elmnet::data::synthetic_blobs;
use elmnet::eval::relative_diff;
use elmnet::model::{compute_hidden_matrix, generate_feature_map, ActivationKind};
use elmnet::solvers::{hierarchical_solve, solve_auto, PartitionTree, RidgeConfig};

fn main() -> elmnet::error::Result<()> {
    let data = synthetic_blobs(1, 3000, 10, 5, 0.4)?;
    let y = data.one_hot();
    let cfg = RidgeConfig::default();
    let map = generate_feature_map(10, 800, ActivationKind::Sigmoid, 0)?;
    let h = compute_hidden_matrix(&map, data.features())?;

    let start = Instant::now();
    let direct = solve_auto(&h, &y, &cfg)?;
    println!("direct                  {:>7.3} s", start.elapsed().as_secs_f64());

    for spec in ["400,400", "[[200,200],[200,200]]", "[100,[300,150]],250"] {
        let tree: PartitionTree = spec.parse()?;
        let start = Instant::now();
        let w = hierarchical_solve(&h, &y, &tree, &cfg)?;
        println!(
            "{:<23} {:>7.3} s  depth {}  rel diff {:.2e}",
            tree.to_string(),
            start.elapsed().as_secs_f64(),
            tree.depth(),
            relative_diff(&w, &direct)?
        );
    }
    Ok(())
}
