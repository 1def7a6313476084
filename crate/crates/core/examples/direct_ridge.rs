//! The two closed forms of the ridge solution and which one `solve_auto`
//! picks.

use elmnet::data::{one_hot, synthetic_blobs};
use elmnet::eval::relative_diff;
use elmnet::model::{compute_hidden_matrix, generate_feature_map, ActivationKind};
use elmnet::solvers::{regime_for, solve_auto, solve_dual, solve_primal, RidgeConfig};

fn main() -> elmnet::error::Result<()> {
    let data = synthetic_blobs(3, 60, 4, 3, 0.2)?;
    let y = one_hot(data.labels(), data.class_count())?;
    let cfg = RidgeConfig::new(100.0)?;

    for m in [20, 120] {
        let map = generate_feature_map(4, m, ActivationKind::Sigmoid, 1)?;
        let h = compute_hidden_matrix(&map, data.features())?;
        let primal = solve_primal(&h, &y, &cfg)?;
        let dual = solve_dual(&h, &y, &cfg)?;
        let auto = solve_auto(&h, &y, &cfg)?;
        println!(
            "n = {}, m = {m}: auto uses {:?}, primal vs dual rel diff {:.2e}, auto == {}",
            h.sample_count(),
            regime_for(h.sample_count(), m),
            relative_diff(&primal, &dual)?,
            if auto == primal { "primal" } else { "dual" },
        );
    }
    Ok(())
}
