mod common;

use common::*;
use elmnet::data::{self, Dataset, LabelColumn, Split};
use elmnet::eval;
use elmnet::model::{
    compute_hidden_matrix, generate_feature_map, split_feature_map, ActivationKind, HiddenMatrix, LabelMatrix,
};
use elmnet::solvers::{self, PartitionTree, RidgeConfig};
use faer::Mat;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::RngExt;

fn config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn activation() -> impl Strategy<Value = ActivationKind> {
    prop_oneof![Just(ActivationKind::Sigmoid), Just(ActivationKind::RadialBasis)]
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(1e3), Just(1e6)]
}

/// Hidden matrix of `n` uniform samples in `[-1, 1]^d` under a fresh map,
/// with random real targets.
fn problem(seed: u64, n: usize, m: usize, c: usize, d: usize, kind: ActivationKind) -> (HiddenMatrix, LabelMatrix, Mat<f64>) {
    let mut r = rng(seed);
    let x = uniform(&mut r, d, n, -1.0, 1.0);
    let map = generate_feature_map(d, m, kind, r.random()).unwrap();
    let h = compute_hidden_matrix(&map, x.as_ref()).unwrap();
    let y = LabelMatrix::new(uniform(&mut r, n, c, -1.0, 1.0)).unwrap();
    (h, y, x)
}

fn split_columns(h: &HiddenMatrix, m1: usize) -> (HiddenMatrix, HiddenMatrix) {
    let v = h.values();
    (
        HiddenMatrix::new(v.subcols(0, m1).to_owned()).unwrap(),
        HiddenMatrix::new(v.subcols(m1, v.ncols() - m1).to_owned()).unwrap(),
    )
}

/// Splits `total` into `k` positive parts at random cut points.
fn cuts(seed: u64, total: usize, k: usize) -> Vec<usize> {
    let mut r = rng(seed);
    let k = k.clamp(1, total);
    let mut points: Vec<usize> = Vec::new();
    while points.len() < k - 1 {
        let p = r.random_range(1..total);
        if !points.contains(&p) {
            points.push(p);
        }
    }
    points.sort_unstable();
    points.push(total);
    let mut prev = 0;
    points
        .into_iter()
        .map(|p| {
            let size = p - prev;
            prev = p;
            size
        })
        .collect()
}

proptest! {
    #![proptest_config(config(100, 1))]

    #[test]
    fn hidden_entries_in_range(seed: u64, d in 1usize..8, m in 1usize..12, n in 1usize..12, kind in activation()) {
        let map = generate_feature_map(d, m, kind, seed).unwrap();
        let x = uniform(&mut rng(seed ^ 1), d, n, -1.0, 1.0);
        let h = compute_hidden_matrix(&map, x.as_ref()).unwrap();
        for j in 0..m {
            for i in 0..n {
                let v = h.values()[(i, j)];
                match kind {
                    ActivationKind::Sigmoid => prop_assert!(v > 0.0 && v < 1.0),
                    ActivationKind::RadialBasis => prop_assert!(v > 0.0 && v <= 1.0),
                }
            }
        }
        prop_assert_eq!(&map, &generate_feature_map(d, m, kind, seed).unwrap());
    }

    #[test]
    fn split_hidden_matrices_concatenate_exactly(seed: u64, m in 1usize..16, k in 1usize..5, kind in activation()) {
        let map = generate_feature_map(3, m, kind, seed).unwrap();
        let sizes = cuts(seed, m, k);
        let x = uniform(&mut rng(seed), 3, 7, -1.0, 1.0);
        let parts = split_feature_map(&map, &sizes).unwrap();
        let blocks: Vec<_> = parts.iter().map(|p| compute_hidden_matrix(p, x.as_ref()).unwrap()).collect();
        let joined = HiddenMatrix::hconcat(&blocks.iter().collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(joined, compute_hidden_matrix(&map, x.as_ref()).unwrap());
    }
}

proptest! {
    #![proptest_config(config(150, 2))]

    #[test]
    fn every_factorization_succeeds(
        seed: u64, n in 1usize..40, m1 in 1usize..10, m2 in 1usize..10, alpha in alpha(), kind in activation(),
    ) {
        let (h, _, _) = problem(seed, n, m1 + m2, 1, 6, kind);
        let (h1, h2) = split_columns(&h, m1);
        let mut ops = solvers::build_merge_operands(&h1, &h2, &RidgeConfig::new(alpha).unwrap()).unwrap();
        prop_assert!(ops.a_factor().is_ok());
        prop_assert!(ops.schur_a_factor().is_ok());
        prop_assert_eq!(ops.c_factor().dim(), m2);
        prop_assert_eq!(ops.schur_c_factor().dim(), m1);
    }

    #[test]
    fn primal_merge_equals_direct(
        seed: u64, m1 in 1usize..10, m2 in 1usize..10, factor in 2usize..5, c in 1usize..4,
        d in 4usize..17, alpha in alpha(), kind in activation(),
    ) {
        let n = factor * (m1 + m2);
        let cfg = RidgeConfig::new(alpha).unwrap();
        let (h, y, _) = problem(seed, n, m1 + m2, c, d, kind);
        let (h1, h2) = split_columns(&h, m1);
        let w1 = solvers::solve_primal(&h1, &y, &cfg).unwrap();
        let w2 = solvers::solve_primal(&h2, &y, &cfg).unwrap();
        let mut ops = solvers::build_merge_operands(&h1, &h2, &cfg).unwrap();
        let merged = solvers::merge_primal(&ops, &w1, &w2).unwrap();
        let direct = solvers::solve_primal(&h, &y, &cfg).unwrap();
        prop_assert!(rel(merged.values(), direct.values()) <= 1e-9);

        let z = solvers::build_z_symmetric(&mut ops).unwrap();
        let scale = frob(merged.values());
        let via_z = z.apply(&w1, &w2).unwrap();
        let via_factored = z.apply_factored(&w1, &w2).unwrap();
        prop_assert!(frob((via_z.values() - merged.values()).as_ref()) <= 1e-10 * scale);
        prop_assert!(frob((via_factored.values() - merged.values()).as_ref()) <= 1e-10 * scale);
    }

    #[test]
    fn woodbury_merge_equals_direct(
        seed: u64, n in 2usize..10, factor in 2usize..5, cut in 0.1f64..0.9, c in 1usize..4,
        d in 4usize..17, alpha in alpha(), kind in activation(),
    ) {
        let m = factor * n;
        let m1 = ((m as f64 * cut) as usize).clamp(1, m - 1);
        let cfg = RidgeConfig::new(alpha).unwrap();
        let (h, y, _) = problem(seed, n, m, c, d, kind);
        let (h1, h2) = split_columns(&h, m1);
        let w1 = solvers::solve_dual(&h1, &y, &cfg).unwrap();
        let w2 = solvers::solve_dual(&h2, &y, &cfg).unwrap();
        let merged = solvers::merge_dual(&h1, &h2, &w1, &w2, &y, &cfg).unwrap();
        let direct = solvers::solve_dual(&h, &y, &cfg).unwrap();
        prop_assert!(rel(merged.values(), direct.values()) <= 1e-9);
    }

    #[test]
    fn primal_and_dual_agree(
        seed: u64, n in 1usize..20, m in 1usize..20, c in 1usize..4, alpha in prop_oneof![Just(1.0), Just(1e3)],
        kind in activation(),
    ) {
        prop_assume!(n >= 2 * m || m >= 2 * n);
        let cfg = RidgeConfig::new(alpha).unwrap();
        let (h, y, _) = problem(seed, n, m, c, 8, kind);
        let primal = solvers::solve_primal(&h, &y, &cfg).unwrap();
        let dual = solvers::solve_dual(&h, &y, &cfg).unwrap();
        prop_assert!(rel(dual.values(), primal.values()) <= 1e-9);
    }

    #[test]
    fn hierarchy_is_partition_invariant(
        seed: u64, m in 4usize..24, k in 2usize..5, wide: bool, c in 1usize..4, kind in activation(),
    ) {
        let n = if wide { m / 3 + 1 } else { 3 * m };
        let cfg = RidgeConfig::new(1e3).unwrap();
        let (h, y, _) = problem(seed, n, m, c, 8, kind);
        let direct = solvers::solve_auto(&h, &y, &cfg).unwrap();
        let flat = cuts(seed, m, k);
        let flat_tree = PartitionTree::Node(flat.iter().map(|&s| PartitionTree::Leaf(s)).collect());
        let nested = if flat.len() > 2 {
            let (left, right) = flat.split_at(flat.len() / 2);
            PartitionTree::Node(vec![
                PartitionTree::Node(left.iter().map(|&s| PartitionTree::Leaf(s)).collect()),
                PartitionTree::Node(right.iter().map(|&s| PartitionTree::Leaf(s)).collect()),
            ])
        } else {
            flat_tree.clone()
        };
        for tree in [flat_tree, nested] {
            let w = solvers::hierarchical_solve(&h, &y, &tree, &cfg).unwrap();
            prop_assert!(rel(w.values(), direct.values()) <= 1e-9, "{}", tree);
        }
    }

    #[test]
    fn incremental_equals_batch(
        seed: u64, m in 2usize..24, k in 2usize..9, c in 1usize..4, alpha in alpha(), kind in activation(),
    ) {
        let n = 3 * m;
        let cfg = RidgeConfig::new(alpha).unwrap();
        let data = data::synthetic_blobs(seed, n, 8, c, 0.5).unwrap();
        let y = data.one_hot();
        let map = generate_feature_map(8, m, kind, seed).unwrap();
        let schedule = cuts(seed, m, k);
        let blocks = split_feature_map(&map, &schedule).unwrap();
        let mut state = solvers::incremental_init(data.features(), &y, &blocks[0], &cfg).unwrap();
        for block in &blocks[1..] {
            state = solvers::incremental_add(state, block, data.features(), &y, &cfg).unwrap();
        }
        let h = compute_hidden_matrix(&map, data.features()).unwrap();
        let direct = solvers::solve_auto(&h, &y, &cfg).unwrap();
        prop_assert!(rel(state.weight().values(), direct.values()) <= 1e-9);
    }
}

proptest! {
    #![proptest_config(config(100, 3))]

    #[test]
    fn one_hot_rows_sum_to_one(labels in prop::collection::vec(0usize..7, 1..30)) {
        let y = data::one_hot(&labels, 7).unwrap();
        for i in 0..labels.len() {
            prop_assert_eq!((0..7).map(|j| y.values()[(i, j)]).sum::<f64>(), 1.0);
        }
        prop_assert_eq!(eval::classify(y.values()), labels);
    }

    #[test]
    fn normalize_is_idempotent(seed: u64, d in 1usize..6, n in 2usize..30, scale in 0.1f64..100.0) {
        let x = uniform(&mut rng(seed), d, n, -scale, scale);
        let ds = Dataset::new(x, vec![0; n], 1, "p", Split::Train).unwrap();
        let once = data::normalize_minmax(&ds);
        let twice = data::normalize_minmax(&once);
        prop_assert!(max_abs_diff(once.features(), twice.features()) <= 1e-15);
    }

    #[test]
    fn csv_round_trip(seed: u64, n in 3usize..40, d in 1usize..6, c in 1usize..4, spread in 0.0f64..3.0) {
        let ds = data::synthetic_blobs(seed, n, d, c, spread).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        data::write_csv(&ds, &path, false).unwrap();
        let back = data::load_csv(&path, LabelColumn::Last, false).unwrap();
        prop_assert!(max_abs_diff(back.features(), ds.features()) <= 1e-12);
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn argmax_ignores_positive_row_scaling(seed: u64, n in 1usize..20, c in 1usize..6) {
        let mut r = rng(seed);
        let f = uniform(&mut r, n, c, -5.0, 5.0);
        let factors: Vec<f64> = (0..n).map(|_| r.random_range(0.01..100.0)).collect();
        let scaled = Mat::from_fn(n, c, |i, j| f[(i, j)] * factors[i]);
        prop_assert_eq!(eval::classify(scaled.as_ref()), eval::classify(f.as_ref()));
    }

    #[test]
    fn error_rate_of_identical_labels_is_zero(labels in prop::collection::vec(0usize..10, 1..50)) {
        prop_assert_eq!(eval::error_rate(&labels, &labels).unwrap(), 0.0);
    }
}

#[test]
fn hidden_matrix_ignores_thread_count() {
    let map = generate_feature_map(16, 300, ActivationKind::Sigmoid, 5).unwrap();
    let x = uniform(&mut rng(5), 16, 2000, -1.0, 1.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| compute_hidden_matrix(&map, x.as_ref()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn hierarchy_ignores_thread_count() {
    let data = data::synthetic_blobs(9, 400, 6, 3, 0.4).unwrap();
    let y = data.one_hot();
    let map = generate_feature_map(6, 120, ActivationKind::Sigmoid, 9).unwrap();
    let h = compute_hidden_matrix(&map, data.features()).unwrap();
    let tree: PartitionTree = "[[30,30],[30,30]]".parse().unwrap();
    let cfg = RidgeConfig::new(1e3).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solvers::hierarchical_solve(&h, &y, &tree, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}
