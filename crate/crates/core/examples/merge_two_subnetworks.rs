//! Trains two halves of a network separately and merges them into the whole
//! network's solution, three ways.

use elmnet::data::synthetic_blobs;
use elmnet::eval::relative_diff;
use elmnet::model::{compute_hidden_matrix, generate_feature_map, split_feature_map, ActivationKind};
use elmnet::solvers::{build_merge_operands, build_z_symmetric, merge_primal, solve_primal, RidgeConfig};

fn main() -> elmnet::error::Result<()> {
    let data = synthetic_blobs(5, 300, 6, 4, 0.3)?;
    let y = data.one_hot();
    let cfg = RidgeConfig::default();

    let map = generate_feature_map(6, 80, ActivationKind::Sigmoid, 2)?;
    let parts = split_feature_map(&map, &[50, 30])?;
    let h1 = compute_hidden_matrix(&parts[0], data.features())?;
    let h2 = compute_hidden_matrix(&parts[1], data.features())?;
    let h = compute_hidden_matrix(&map, data.features())?;

    let w1 = solve_primal(&h1, &y, &cfg)?;
    let w2 = solve_primal(&h2, &y, &cfg)?;
    let direct = solve_primal(&h, &y, &cfg)?;

    let mut ops = build_merge_operands(&h1, &h2, &cfg)?;
    let merged = merge_primal(&ops, &w1, &w2)?;
    println!("blockwise merge   vs direct: {:.2e}", relative_diff(&merged, &direct)?);

    let z = build_z_symmetric(&mut ops)?;
    println!("explicit Z        vs direct: {:.2e}", relative_diff(&z.apply(&w1, &w2)?, &direct)?);
    println!("factored Z        vs direct: {:.2e}", relative_diff(&z.apply_factored(&w1, &w2)?, &direct)?);

    let e = ops.z_schur();
    println!("Z is {} x {}; top-left block E = S_C^-1 A has trace {:.4}", e.nrows(), e.ncols(), (0..50).map(|i| e[(i, i)]).sum::<f64>());
    Ok(())
}
