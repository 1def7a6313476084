//! Merging in the kernel form, for networks wider than the sample count.

use elmnet::data::synthetic_blobs;
use elmnet::eval::relative_diff;
use elmnet::model::{compute_hidden_matrix, generate_feature_map, split_feature_map, ActivationKind};
use elmnet::solvers::{merge_dual_with_adjustment, solve_dual, RidgeConfig};

fn main() -> elmnet::error::Result<()> {
    let data = synthetic_blobs(9, 40, 3, 2, 0.25)?;
    let y = data.one_hot();
    let cfg = RidgeConfig::new(10.0)?;

    let map = generate_feature_map(3, 100, ActivationKind::RadialBasis, 4)?;
    let parts = split_feature_map(&map, &[60, 40])?;
    let h1 = compute_hidden_matrix(&parts[0], data.features())?;
    let h2 = compute_hidden_matrix(&parts[1], data.features())?;

    let w1 = solve_dual(&h1, &y, &cfg)?;
    let w2 = solve_dual(&h2, &y, &cfg)?;
    let (merged, delta) = merge_dual_with_adjustment(&h1, &h2, &w1, &w2, &y, &cfg)?;
    let direct = solve_dual(&compute_hidden_matrix(&map, data.features())?, &y, &cfg)?;

    println!("n = 40, m = 60 + 40");
    println!("merged vs direct rel diff: {:.2e}", relative_diff(&merged, &direct)?);
    println!("adjustment norm ||dW||_F:  {:.4}", delta.values().norm_l2());
    Ok(())
}
