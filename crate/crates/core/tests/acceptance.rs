//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion to
//! stderr (unaffected by output capture) and asserts the criteria that do
//! not depend on datasets or hardware.
//!
//! Datasets are read from `data/` at the workspace root; see
//! `scripts/prepare_datasets.py`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use elmnet::data::{self, Dataset, LabelColumn, Split};
use elmnet::error::ElmError;
use elmnet::eval::{self, BenchReport, ComparisonConfig, Variant};
use elmnet::linalg::SpdFactor;
use elmnet::model::ActivationKind;
use elmnet::selftest::{Check, Instance, EQUIVALENCE_TOL, Z_FORM_TOL};
use elmnet::solvers::{MergeOperands, PartitionTree, RidgeConfig, DEFAULT_ALPHA};
use faer::Mat;

const SUITE_SEED: u64 = 0;
const SUITE_TRIALS: usize = 200;
const SUITE_SECONDS: f64 = 60.0;
const Z_INSTANCES: usize = 50;
const Z_MAX_ALPHA: f64 = 1e3;
const MAX_INCREMENTS: usize = 8;
const PENDIGITS_ERROR: f64 = 2.57;
const USPS_ERROR: f64 = 4.53;
const ERROR_BAND: f64 = 1.0;
const USPS_FROB_FACTOR: f64 = 1e-10;
const SPEEDUP: f64 = 1.3;
const MNIST_SUBSET: usize = 10_000;
const REPEATS: usize = 5;

fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    writeln!(err, "{line}").expect("stderr is writable");
}

struct Outcome {
    name: &'static str,
    passed: bool,
    /// Failing is a test failure, not just a reported result.
    asserted: bool,
}

fn report(name: &'static str, passed: bool, asserted: bool, detail: String) -> Outcome {
    say(&format!("[{}] {name}: {detail}", if passed { "PASS" } else { "FAIL" }));
    Outcome { name, passed, asserted }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).expect("workspace root").join("data")
}

fn suite() -> Vec<Instance> {
    (0..SUITE_TRIALS).map(|t| Instance::draw(SUITE_SEED, t).expect("instance")).collect()
}

fn equivalence_suite(instances: &[Instance], seconds_to_draw: f64) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (trial, inst) in instances.iter().enumerate() {
        match Check::MergeEquivalence.run(inst, None) {
            Ok(r) => worst = worst.max(r),
            Err(e) => failures.push(format!("trial {trial}: {e}")),
        }
    }
    let seconds = seconds_to_draw + start.elapsed().as_secs_f64();
    let primal = instances.iter().filter(|i| i.is_primal()).count();
    let mut kinds: Vec<_> = instances.iter().map(|i| (i.activation, i.labels.class_count(), i.ridge.alpha().to_bits())).collect();
    kinds.sort_by_key(|&(a, c, al)| (a as u8, c, al));
    kinds.dedup();
    let covered = primal > 0 && primal < instances.len() && kinds.len() == 12;
    let passed = failures.is_empty() && seconds < SUITE_SECONDS && covered;
    report(
        "oracle-equivalence suite",
        passed,
        true,
        format!(
            "{}/{} merged vs direct within {EQUIVALENCE_TOL:e} (worst {worst:.2e}); {primal} primal / {} dual; {} activation x classes x alpha combinations; {seconds:.2} s (limit {SUITE_SECONDS} s){}",
            instances.len() - failures.len(),
            instances.len(),
            instances.len() - primal,
            kinds.len(),
            failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
        ),
    )
}

fn z_consistency(instances: &[Instance]) -> Outcome {
    let (mut checked, mut worst, mut failures) = (0, 0.0f64, Vec::new());
    let (mut beyond, mut beyond_worst, mut beyond_failures) = (0, 0.0f64, Vec::new());
    for (trial, inst) in instances.iter().enumerate().filter(|(_, i)| i.is_primal()) {
        let result = Check::ZConsistency.run(inst, None);
        if inst.ridge.alpha() <= Z_MAX_ALPHA {
            if checked == Z_INSTANCES {
                continue;
            }
            checked += 1;
            match result {
                Ok(r) => worst = worst.max(r),
                Err(e) => failures.push(format!("trial {trial}: {e}")),
            }
        } else {
            beyond += 1;
            match result {
                Ok(r) => beyond_worst = beyond_worst.max(r),
                Err(e) => beyond_failures.push(format!("trial {trial}: {e}")),
            }
        }
    }
    report(
        "Z-consistency",
        failures.is_empty() && checked == Z_INSTANCES,
        true,
        format!(
            "{}/{checked} primal instances (alpha <= {Z_MAX_ALPHA:e}) merge path, explicit Z and factored Z within {Z_FORM_TOL:e} (worst {worst:.2e}); not in scope, alpha = 1e6: {}/{beyond} within, worst passing {beyond_worst:.2e}{}",
            checked - failures.len(),
            beyond - beyond_failures.len(),
            if beyond_failures.is_empty() { String::new() } else { format!(" ({})", beyond_failures.join(", ")) }
        ),
    )
}

fn incremental(instances: &[Instance]) -> Outcome {
    let (mut checked, mut worst, mut failures) = (0, 0.0f64, Vec::new());
    for (trial, inst) in instances.iter().enumerate().filter(|(_, i)| i.is_primal()) {
        checked += 1;
        match Check::IncrementalBatch.run(inst, None) {
            Ok(r) => worst = worst.max(r),
            Err(e) => failures.push(format!("trial {trial}: {e}")),
        }
    }
    let longest = instances.iter().map(|i| i.schedule.len() - 1).max().unwrap_or(0);

    // a full-length schedule on a classification problem
    let train = data::synthetic_blobs(11, 1500, 10, 6, 0.4).expect("blobs");
    let test = data::synthetic_blobs(12, 600, 10, 6, 0.4).expect("blobs").with_split(Split::Test);
    let cfg = ComparisonConfig {
        activation: ActivationKind::Sigmoid,
        ridge: RidgeConfig::new(DEFAULT_ALPHA).unwrap(),
        seed: 0,
        repeats: 1,
        threads: None,
        variant: Variant::Incremental(vec![40; MAX_INCREMENTS + 1]),
    };
    let r = eval::run_comparison(&train, &test, &cfg).expect("comparison");
    let grown = r.run("incremental").expect("incremental run");
    let direct = r.run("direct").expect("direct run");
    let blob_rel = grown.rel_diff.unwrap();
    let blob_ok = blob_rel <= EQUIVALENCE_TOL && grown.prediction_mismatches == Some(0) && grown.error_pct == direct.error_pct;

    report(
        "incremental = batch",
        failures.is_empty() && blob_ok,
        true,
        format!(
            "{}/{checked} suite instances (1 to {longest} increments) within {EQUIVALENCE_TOL:e} with identical labels (worst {worst:.2e}); {MAX_INCREMENTS} increments of 40 on blobs: rel {blob_rel:.2e}, {} label mismatches{}",
            checked - failures.len(),
            grown.prediction_mismatches.unwrap(),
            failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
        ),
    )
}

fn hierarchical_config(neurons: usize, repeats: usize) -> ComparisonConfig {
    ComparisonConfig {
        activation: ActivationKind::Sigmoid,
        ridge: RidgeConfig::new(DEFAULT_ALPHA).unwrap(),
        seed: 0,
        repeats,
        threads: None,
        variant: Variant::Hierarchical(PartitionTree::even(neurons, 2).unwrap()),
    }
}

fn timing(r: &BenchReport) -> (f64, f64) {
    (r.run("direct").unwrap().time_s, r.runs[1].time_s)
}

/// Whether the hierarchical run reproduces the direct one: identical error,
/// no label changes, and the weight difference bound.
fn exact(r: &BenchReport, frob_bound: impl Fn(&BenchReport) -> bool) -> bool {
    let (d, h) = (r.run("direct").unwrap(), &r.runs[1]);
    d.error_pct == h.error_pct && h.prediction_mismatches == Some(0) && frob_bound(r)
}

fn csv_benchmark(
    name: &'static str,
    stem: &str,
    target: f64,
    frob_factor: Option<f64>,
) -> (Outcome, Option<bool>) {
    let dir = data_dir().join(stem);
    let (train, test) = (dir.join(format!("{stem}-train.csv")), dir.join(format!("{stem}-test.csv")));
    if !train.exists() || !test.exists() {
        let detail = format!("dataset not available ({} missing; see README)", train.display());
        return (report(name, false, false, detail), None);
    }
    let (train, test) = data::load_csv_pair(&train, &test, LabelColumn::Last, false).expect("csv");
    let (train, test) = data::normalize_pair(&train, &test).expect("normalize");
    let r = eval::run_comparison(&train, &test, &hierarchical_config(4000, REPEATS)).expect("comparison");
    let (d, h) = (r.run("direct").unwrap(), &r.runs[1]);
    let in_band = (d.error_pct - target).abs() <= ERROR_BAND;
    let frob_ok = |r: &BenchReport| match frob_factor {
        // the weight norm is not in the report; rel_diff is ‖W_H − W_O‖_F / ‖W_O‖_F
        Some(f) => r.runs[1].rel_diff.unwrap() <= f,
        None => true,
    };
    let same = exact(&r, frob_ok);
    let (t_o, t_h) = timing(&r);
    let faster = t_h < t_o;
    let detail = format!(
        "n={}/{} d={}; ErrorO {:.2}% ErrorH {:.2}% (target {target} +- {ERROR_BAND}); {} label mismatches; rel diff {:.2e}; TimeO {t_o:.2} s TimeH {t_h:.2} s ({}{REPEATS} runs, {} threads)",
        r.train_samples,
        r.test_samples,
        r.input_dim,
        d.error_pct,
        h.error_pct,
        h.prediction_mismatches.unwrap(),
        h.rel_diff.unwrap(),
        if faster { "" } else { "hierarchical not faster; " },
        r.threads
    );
    (report(name, in_band && same && faster, false, detail), Some(same))
}

fn speedup() -> (Outcome, Option<bool>) {
    let train = data::synthetic_blobs(21, 20_000, 16, 10, 0.5).expect("blobs");
    let test = data::synthetic_blobs(22, 2_000, 16, 10, 0.5).expect("blobs").with_split(Split::Test);
    let r = eval::run_comparison(&train, &test, &hierarchical_config(4000, 1)).expect("comparison");
    let factor = r.speedup().unwrap();
    let synthetic_exact = exact(&r, |r| r.runs[1].rel_diff.unwrap() <= EQUIVALENCE_TOL);
    let mut detail = format!(
        "synthetic 20000x4000 split 2000+2000: {factor:.2}x (need {SPEEDUP}x, {} threads), rel diff {:.2e}",
        r.threads,
        r.runs[1].rel_diff.unwrap()
    );

    let dir = data_dir().join("mnist");
    let files = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .map(|f| dir.join(f));
    let mnist = if files.iter().all(|f| f.exists()) {
        let train = data::load_idx(&files[0], &files[1]).expect("mnist").head(MNIST_SUBSET).expect("subset");
        let test = data::load_idx(&files[2], &files[3]).expect("mnist").with_split(Split::Test);
        let m = eval::run_comparison(&train, &test, &hierarchical_config(4000, 1)).expect("comparison");
        let ok = exact(&m, |m| m.runs[1].rel_diff.unwrap() <= EQUIVALENCE_TOL);
        detail += &format!(
            "; mnist {MNIST_SUBSET}-sample subset: ErrorO {:.2}% ErrorH {:.2}%, {} label mismatches, rel diff {:.2e}",
            m.runs[0].error_pct,
            m.runs[1].error_pct,
            m.runs[1].prediction_mismatches.unwrap(),
            m.runs[1].rel_diff.unwrap()
        );
        Some(ok)
    } else {
        detail += "; mnist not available (see README)";
        None
    };
    let passed = factor >= SPEEDUP && synthetic_exact && mnist == Some(true);
    (report("speedup", passed, false, detail), Some(synthetic_exact && mnist.unwrap_or(true)))
}

fn lemma(instances: &[Instance]) -> Outcome {
    let failures: Vec<_> = instances
        .iter()
        .enumerate()
        .filter_map(|(t, i)| Check::PdChain.run(i, None).err().map(|e| format!("trial {t}: {e}")))
        .collect();
    let skewed = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else if i < j { 1.0 } else { 0.5 });
    let direct = SpdFactor::new("fixture", skewed.as_ref());
    let via_merge = MergeOperands::from_blocks(skewed.clone(), None, Mat::zeros(3, 1), Mat::identity(1, 1), None);
    let rejected = |r: &Result<_, ElmError>| matches!(r, Err(ElmError::Numeric { .. }));
    let fixture_ok = rejected(&direct.map(|_| ())) && rejected(&via_merge.map(|_| ()));
    report(
        "positive definiteness",
        failures.is_empty() && fixture_ok,
        true,
        format!(
            "A, C, S_C, S_A factorized in {}/{} suite instances; non-symmetric fixture {}",
            instances.len() - failures.len(),
            instances.len(),
            if fixture_ok { "rejected with a numeric error" } else { "NOT rejected" }
        ),
    )
}

fn loader() -> (Outcome, bool) {
    let dir = tempfile::tempdir().unwrap();
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
    images.extend_from_slice(&[0, 255, 128, 0]);
    let labels = [0, 0, 8, 1, 0, 0, 0, 1, 7];
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    std::fs::write(&ip, images).unwrap();
    std::fs::write(&lp, labels).unwrap();
    let d: Dataset = data::load_idx(&ip, &lp).expect("fixture");
    let column: Vec<f64> = (0..d.input_dim()).map(|i| d.features()[(i, 0)]).collect();
    let fixture_ok = column == [0.0, 1.0, 128.0 / 255.0, 0.0] && d.labels() == [7];

    let header = data_dir().join("mnist/train-images-idx3-ubyte");
    let (mnist_ok, mnist) = match data::read_idx_header(&header) {
        Ok(h) => (h.dims == [60000, 28, 28], format!("mnist train header {:?}", h.dims)),
        Err(e) => (false, format!("mnist header unavailable ({e})")),
    };
    let outcome = report(
        "loader fidelity",
        fixture_ok && mnist_ok,
        false,
        format!("1-image 2x2 fixture -> {column:?}; {mnist}"),
    );
    (outcome, fixture_ok)
}

#[test]
fn acceptance() {
    say("acceptance criteria");
    let start = Instant::now();
    let instances = suite();
    let draw = start.elapsed().as_secs_f64();

    let mut outcomes = vec![equivalence_suite(&instances, draw), z_consistency(&instances), incremental(&instances)];
    // exactness sub-checks hold regardless of data, hardware or error bands
    let mut exactness = Vec::new();
    let (o, same) = csv_benchmark("pendigits end-to-end", "pendigits", PENDIGITS_ERROR, None);
    outcomes.push(o);
    exactness.push(("pendigits ErrorO = ErrorH", same));
    let (o, same) = csv_benchmark("usps end-to-end", "usps", USPS_ERROR, Some(USPS_FROB_FACTOR));
    outcomes.push(o);
    exactness.push(("usps ErrorO = ErrorH", same));
    let (o, same) = speedup();
    outcomes.push(o);
    exactness.push(("speedup-run equivalence", same));
    outcomes.push(lemma(&instances));
    let (o, fixture) = loader();
    outcomes.push(o);
    exactness.push(("IDX fixture", Some(fixture)));

    let passed = outcomes.iter().filter(|o| o.passed).count();
    say(&format!("{passed}/{} criteria passed in {:.1} s", outcomes.len(), start.elapsed().as_secs_f64()));

    for o in &outcomes {
        assert!(o.passed || !o.asserted, "{} failed", o.name);
    }
    for (name, ok) in exactness {
        assert_ne!(ok, Some(false), "{name} failed");
    }
}
