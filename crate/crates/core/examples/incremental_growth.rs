//! Grows a network block by block and checks each step against retraining.

use elmnet::data::synthetic_blobs;
use elmnet::eval::relative_diff;
use elmnet::model::{compute_hidden_matrix, generate_feature_map, split_feature_map, ActivationKind};
use elmnet::solvers::{build_merge_operands, incremental_add, incremental_init, solve_auto, update_operators, RidgeConfig};

fn main() -> elmnet::error::Result<()> {
    let data = synthetic_blobs(2, 500, 8, 4, 0.3)?;
    let (x, y) = (data.features(), data.one_hot());
    let cfg = RidgeConfig::default();
    let map = generate_feature_map(8, 160, ActivationKind::Sigmoid, 3)?;
    let blocks = split_feature_map(&map, &[40, 40, 40, 40])?;

    let mut state = incremental_init(x, &y, &blocks[0], &cfg)?;
    for block in &blocks[1..] {
        state = incremental_add(state, block, x, &y, &cfg)?;
        let h = compute_hidden_matrix(state.map(), x)?;
        let retrained = solve_auto(&h, &y, &cfg)?;
        println!("{:>3} neurons: rel diff to retraining {:.2e}", state.hidden_count(), relative_diff(state.weight(), &retrained)?);
    }

    // the same step through the explicit operators W' = P W - Q W_new
    let h_old = compute_hidden_matrix(&blocks[0], x)?;
    let h_new = compute_hidden_matrix(&blocks[1], x)?;
    let ops = build_merge_operands(&h_old, &h_new, &cfg)?;
    let pq = update_operators(&ops);
    let grown = pq.apply(&solve_auto(&h_old, &y, &cfg)?, &solve_auto(&h_new, &y, &cfg)?)?;
    let both = compute_hidden_matrix(&map.slice(0, 80)?, x)?;
    println!("P is {} x {}, Q is {} x {}; P/Q step rel diff {:.2e}", pq.p.nrows(), pq.p.ncols(), pq.q.nrows(), pq.q.ncols(), relative_diff(&grown, &solve_auto(&both, &y, &cfg)?)?);
    Ok(())
}
