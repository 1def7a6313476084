//! Draws a feature map and shows the hidden-layer outputs for a few inputs.

use elmnet::model::{compute_hidden_matrix, generate_feature_map, split_feature_map, ActivationKind};
use faer::Mat;

fn main() -> elmnet::error::Result<()> {
    // five 3-d samples as columns
    let x = Mat::from_fn(3, 5, |i, j| (i as f64 - 1.0) * 0.5 + j as f64 * 0.1);

    for activation in [ActivationKind::Sigmoid, ActivationKind::RadialBasis] {
        let map = generate_feature_map(3, 4, activation, 7)?;
        let h = compute_hidden_matrix(&map, x.as_ref())?;
        println!("{activation}: H is {} x {}", h.sample_count(), h.hidden_count());
        for i in 0..h.sample_count() {
            let row: Vec<String> = (0..h.hidden_count()).map(|j| format!("{:.4}", h.values()[(i, j)])).collect();
            println!("  {}", row.join("  "));
        }
    }

    // the same seed always gives the same map, and slicing it gives the
    // column blocks of H
    let map = generate_feature_map(3, 6, ActivationKind::Sigmoid, 7)?;
    assert_eq!(map, generate_feature_map(3, 6, ActivationKind::Sigmoid, 7)?);
    let parts = split_feature_map(&map, &[2, 4])?;
    let whole = compute_hidden_matrix(&map, x.as_ref())?;
    let right = compute_hidden_matrix(&parts[1], x.as_ref())?;
    assert_eq!(whole.values().subcols(2, 4), right.values());
    println!("block [2, 4] of the 6-neuron map reproduces columns 2..6");
    Ok(())
}
