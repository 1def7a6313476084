//! Prediction, error metrics and the direct-versus-merged comparison
//! harness.

use std::fmt;
use std::time::Instant;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ElmError, Result};
use crate::linalg;
use crate::model::{
    compute_hidden_matrix, generate_feature_map, ActivationKind, HiddenMatrix, OutputWeight, RandomFeatureMap,
    RNG_ALGORITHM,
};
use crate::solvers::{hierarchical_train, incremental_add, incremental_init, solve_auto, PartitionTree, RidgeConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Predictions whose top two scores are closer than this are counted
/// separately instead of being compared.
pub const MARGIN_THRESHOLD: f64 = 1e-6;

const TIMING_SCOPE: &str =
    "wall clock of hidden-matrix computation plus solving; excludes loading and feature-map generation";

/// Network output `F = H W` for the `d × n` samples.
pub fn predict(map: &RandomFeatureMap, w: &OutputWeight, samples: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let h = compute_hidden_matrix(map, samples)?;
    scores(&h, w)
}

/// `H W` for an already computed hidden matrix.
pub fn scores(h: &HiddenMatrix, w: &OutputWeight) -> Result<Mat<f64>> {
    if h.hidden_count() != w.hidden_count() {
        return Err(ElmError::invalid(format!(
            "hidden matrix has {} neurons, weight has {} rows",
            h.hidden_count(),
            w.hidden_count()
        )));
    }
    Ok(linalg::mul(h.values(), w.values()))
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn classify(f: MatRef<'_, f64>) -> Vec<usize> {
    (0..f.nrows())
        .map(|i| {
            (1..f.ncols()).fold(0, |best, j| if f[(i, j)] > f[(i, best)] { j } else { best })
        })
        .collect()
}

/// Gap between the largest and second largest score of each row.
pub fn score_margins(f: MatRef<'_, f64>) -> Vec<f64> {
    (0..f.nrows())
        .map(|i| {
            let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for j in 0..f.ncols() {
                let v = f[(i, j)];
                if v > top {
                    second = top;
                    top = v;
                } else if v > second {
                    second = v;
                }
            }
            top - second
        })
        .collect()
}

/// Percentage of positions where the labels differ.
pub fn error_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(ElmError::invalid(format!(
            "cannot compare {} predictions with {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(100.0 * wrong as f64 / truth.len() as f64)
}

pub fn frobenius_diff(a: &OutputWeight, b: &OutputWeight) -> Result<f64> {
    let (a, b) = (a.values(), b.values());
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(ElmError::invalid(format!(
            "cannot compare a {}x{} weight with a {}x{} weight",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok((a - b).norm_l2())
}

/// `‖W − W_ref‖_F / ‖W_ref‖_F`, or the absolute difference when the
/// reference is zero.
pub fn relative_diff(w: &OutputWeight, reference: &OutputWeight) -> Result<f64> {
    let diff = frobenius_diff(w, reference)?;
    let scale = reference.values().norm_l2();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// Split the hidden layer as the tree describes and merge.
    Hierarchical(PartitionTree),
    /// Train the first block, then grow by the remaining blocks one at a
    /// time.
    Incremental(Vec<usize>),
}

impl Variant {
    fn neurons(&self) -> usize {
        match self {
            Variant::Hierarchical(tree) => tree.total(),
            Variant::Incremental(schedule) => schedule.iter().sum(),
        }
    }

    fn label(&self) -> String {
        match self {
            Variant::Hierarchical(tree) => tree.to_string(),
            Variant::Incremental(schedule) => {
                schedule.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub activation: ActivationKind,
    pub ridge: RidgeConfig,
    /// Repeat `k` draws its feature map with seed `seed + k`.
    pub seed: u64,
    pub repeats: usize,
    /// Worker threads for the run; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub variant: Variant,
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(ElmError::invalid("repeats must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(ElmError::invalid("threads must be at least 1"));
        }
        match &self.variant {
            Variant::Hierarchical(tree) if tree.total() == 0 => Err(ElmError::invalid("empty partition")),
            Variant::Incremental(s) if s.is_empty() || s.contains(&0) => {
                Err(ElmError::invalid("increment sizes must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub neurons: usize,
    pub partition: String,
    /// Mean over repeats.
    pub time_s: f64,
    pub time_samples_s: Vec<f64>,
    /// Mean over repeats.
    pub error_pct: f64,
    /// Largest `‖W − W_O‖_F` over repeats; absent for the direct baseline.
    pub frob_diff: Option<f64>,
    pub rel_diff: Option<f64>,
    /// Test samples whose predicted label differs from the baseline's,
    /// among those with a baseline score margin above [`MARGIN_THRESHOLD`].
    pub prediction_mismatches: Option<usize>,
    /// Test samples with a baseline margin at or below the threshold.
    pub sub_margin_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub dataset: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub input_dim: usize,
    pub class_count: usize,
    pub activation: ActivationKind,
    pub alpha: f64,
    pub seed: u64,
    pub repeats: usize,
    pub threads: usize,
    pub rng: String,
    pub timing_scope: String,
    pub runs: Vec<RunRecord>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn run(&self, method: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.method == method)
    }

    /// Direct time over variant time.
    pub fn speedup(&self) -> Option<f64> {
        let direct = self.run("direct")?;
        let other = self.runs.iter().find(|r| r.method != "direct")?;
        (other.time_s > 0.0).then(|| direct.time_s / other.time_s)
    }
}

fn opt<T: fmt::Display>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map_or_else(|| "-".to_owned(), f)
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} ({} train / {} test, d={}, c={})  activation={}  alpha={:e}  seed={}  repeats={}  threads={}",
            self.dataset,
            self.train_samples,
            self.test_samples,
            self.input_dim,
            self.class_count,
            self.activation,
            self.alpha,
            self.seed,
            self.repeats,
            self.threads
        )?;
        writeln!(
            f,
            "{:<13} {:>7} {:<22} {:>9} {:>8} {:>10} {:>10} {:>9} {:>10}",
            "method", "neurons", "partition", "time_s", "error_%", "frob_diff", "rel_diff", "mismatch", "sub_margin"
        )?;
        for r in &self.runs {
            writeln!(
                f,
                "{:<13} {:>7} {:<22} {:>9.3} {:>8.2} {:>10} {:>10} {:>9} {:>10}",
                r.method,
                r.neurons,
                r.partition,
                r.time_s,
                r.error_pct,
                opt(r.frob_diff, |v| format!("{v:.2e}")),
                opt(r.rel_diff, |v| format!("{v:.2e}")),
                opt(r.prediction_mismatches, |v| v.to_string()),
                opt(r.sub_margin_samples, |v| v.to_string()),
            )?;
        }
        if let Some(s) = self.speedup() {
            writeln!(f, "speedup (direct / {}): {s:.2}x", self.runs[1].method)?;
        }
        Ok(())
    }
}

/// Per-repeat outcome of one method.
struct Trial {
    seconds: f64,
    weight: OutputWeight,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn direct_trial(train: &Dataset, map: &RandomFeatureMap, ridge: &RidgeConfig) -> Result<Trial> {
    let y = train.one_hot();
    let (weight, seconds) = timed(|| {
        let h = compute_hidden_matrix(map, train.features())?;
        solve_auto(&h, &y, ridge)
    })?;
    Ok(Trial { seconds, weight })
}

fn hierarchical_trial(train: &Dataset, map: &RandomFeatureMap, tree: &PartitionTree, cfg: &ComparisonConfig) -> Result<Trial> {
    let y = train.one_hot();
    let (weight, seconds) = timed(|| hierarchical_train(train.features(), &y, map, tree, &cfg.ridge))?;
    Ok(Trial { seconds, weight })
}

/// Walks the schedule twice from the same initial network: once retraining
/// from scratch at every size, once with incremental updates. Only the
/// growth steps are timed; the initial training is shared.
fn incremental_trials(
    train: &Dataset,
    map: &RandomFeatureMap,
    schedule: &[usize],
    cfg: &ComparisonConfig,
) -> Result<(Trial, Trial)> {
    let y = train.one_hot();
    let x = train.features();
    let first = map.slice(0, schedule[0])?;
    let mut blocks = Vec::with_capacity(schedule.len() - 1);
    let mut start = schedule[0];
    for &len in &schedule[1..] {
        blocks.push(map.slice(start, len)?);
        start += len;
    }

    let mut h = compute_hidden_matrix(&first, x)?;
    let mut direct_w = solve_auto(&h, &y, &cfg.ridge)?;
    let mut direct_s = 0.0;
    for block in &blocks {
        let (w, s) = timed(|| {
            let h_new = compute_hidden_matrix(block, x)?;
            h = HiddenMatrix::hconcat(&[&h, &h_new])?;
            solve_auto(&h, &y, &cfg.ridge)
        })?;
        direct_w = w;
        direct_s += s;
    }

    let mut state = incremental_init(x, &y, &first, &cfg.ridge)?;
    let mut inc_s = 0.0;
    for block in &blocks {
        let (next, s) = timed(|| incremental_add(state, block, x, &y, &cfg.ridge))?;
        state = next;
        inc_s += s;
    }
    Ok((
        Trial { seconds: direct_s, weight: direct_w },
        Trial { seconds: inc_s, weight: state.weight().clone() },
    ))
}

#[derive(Default)]
struct Tally {
    seconds: Vec<f64>,
    errors: Vec<f64>,
    frob: Option<f64>,
    rel: Option<f64>,
    mismatches: Option<usize>,
    sub_margin: Option<usize>,
}

impl Tally {
    fn record(&mut self, method: &str, neurons: usize, partition: String) -> RunRecord {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        RunRecord {
            method: method.to_owned(),
            neurons,
            partition,
            time_s: mean(&self.seconds),
            time_samples_s: std::mem::take(&mut self.seconds),
            error_pct: mean(&self.errors),
            frob_diff: self.frob,
            rel_diff: self.rel,
            prediction_mismatches: self.mismatches,
            sub_margin_samples: self.sub_margin,
        }
    }
}

fn max_opt<T: PartialOrd>(acc: Option<T>, v: T) -> Option<T> {
    match acc {
        Some(a) if a >= v => Some(a),
        _ => Some(v),
    }
}

fn in_pool<T: Send>(threads: Option<usize>, body: impl FnOnce() -> Result<T> + Send) -> Result<(T, usize)> {
    match threads {
        Some(0) => Err(ElmError::invalid("threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| ElmError::invalid(format!("cannot start {t} threads: {e}")))?;
            Ok((pool.install(body)?, pool.current_num_threads()))
        }
        None => Ok((body()?, rayon::current_num_threads())),
    }
}

fn check_pair(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.input_dim() != test.input_dim() || train.class_count() != test.class_count() {
        return Err(ElmError::invalid("train and test sets differ in dimension or class count"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn report(
    train: &Dataset,
    test: &Dataset,
    activation: ActivationKind,
    ridge: &RidgeConfig,
    seed: u64,
    repeats: usize,
    threads: usize,
    timing_scope: String,
    runs: Vec<RunRecord>,
) -> BenchReport {
    BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: train.name().to_owned(),
        train_samples: train.sample_count(),
        test_samples: test.sample_count(),
        input_dim: train.input_dim(),
        class_count: train.class_count(),
        activation,
        alpha: ridge.alpha(),
        seed,
        repeats,
        threads,
        rng: RNG_ALGORITHM.to_owned(),
        timing_scope,
        runs,
    }
}

/// Trains the direct baseline and the configured variant on `train` with
/// the same feature map, `repeats` times, and evaluates both on `test`.
pub fn run_comparison(train: &Dataset, test: &Dataset, cfg: &ComparisonConfig) -> Result<BenchReport> {
    cfg.validate()?;
    check_pair(train, test)?;
    let (runs, threads) = in_pool(cfg.threads, || compare(train, test, cfg))?;
    let scope = match cfg.variant {
        Variant::Hierarchical(_) => TIMING_SCOPE.to_owned(),
        Variant::Incremental(_) => format!("{TIMING_SCOPE}; growth steps only"),
    };
    Ok(report(train, test, cfg.activation, &cfg.ridge, cfg.seed, cfg.repeats, threads, scope, runs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub activation: ActivationKind,
    pub neurons: usize,
    pub ridge: RidgeConfig,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// A trained network with its one-run report.
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub map: RandomFeatureMap,
    pub weight: OutputWeight,
    pub report: BenchReport,
}

/// Direct training of a single network, evaluated on `test`.
pub fn run_training(train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<TrainedNetwork> {
    check_pair(train, test)?;
    let map = generate_feature_map(train.input_dim(), cfg.neurons, cfg.activation, cfg.seed)?;
    let ((trial, error_pct), threads) = in_pool(cfg.threads, || {
        let trial = direct_trial(train, &map, &cfg.ridge)?;
        let predicted = classify(predict(&map, &trial.weight, test.features())?.as_ref());
        Ok((trial, error_rate(&predicted, test.labels())?))
    })?;
    let run = RunRecord {
        method: "direct".to_owned(),
        neurons: cfg.neurons,
        partition: cfg.neurons.to_string(),
        time_s: trial.seconds,
        time_samples_s: vec![trial.seconds],
        error_pct,
        frob_diff: None,
        rel_diff: None,
        prediction_mismatches: None,
        sub_margin_samples: None,
    };
    let report = report(train, test, cfg.activation, &cfg.ridge, cfg.seed, 1, threads, TIMING_SCOPE.to_owned(), vec![run]);
    Ok(TrainedNetwork { map, weight: trial.weight, report })
}

fn compare(train: &Dataset, test: &Dataset, cfg: &ComparisonConfig) -> Result<Vec<RunRecord>> {
    let neurons = cfg.variant.neurons();
    let (mut base, mut other) = (Tally::default(), Tally::default());
    for k in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(k as u64);
        let map = generate_feature_map(train.input_dim(), neurons, cfg.activation, seed)?;
        let (direct, variant) = match &cfg.variant {
            Variant::Hierarchical(tree) => {
                (direct_trial(train, &map, &cfg.ridge)?, hierarchical_trial(train, &map, tree, cfg)?)
            }
            Variant::Incremental(schedule) => incremental_trials(train, &map, schedule, cfg)?,
        };

        let h_test = compute_hidden_matrix(&map, test.features())?;
        let f_direct = scores(&h_test, &direct.weight)?;
        let f_variant = scores(&h_test, &variant.weight)?;
        let (p_direct, p_variant) = (classify(f_direct.as_ref()), classify(f_variant.as_ref()));
        let margins = score_margins(f_direct.as_ref());
        let sub_margin = margins.iter().filter(|&&m| m <= MARGIN_THRESHOLD).count();
        let mismatches = (0..p_direct.len())
            .filter(|&i| margins[i] > MARGIN_THRESHOLD && p_direct[i] != p_variant[i])
            .count();

        base.seconds.push(direct.seconds);
        base.errors.push(error_rate(&p_direct, test.labels())?);
        other.seconds.push(variant.seconds);
        other.errors.push(error_rate(&p_variant, test.labels())?);
        other.frob = max_opt(other.frob, frobenius_diff(&variant.weight, &direct.weight)?);
        other.rel = max_opt(other.rel, relative_diff(&variant.weight, &direct.weight)?);
        other.mismatches = Some(other.mismatches.unwrap_or(0) + mismatches);
        other.sub_margin = Some(other.sub_margin.unwrap_or(0) + sub_margin);
    }
    let method = match cfg.variant {
        Variant::Hierarchical(_) => "hierarchical",
        Variant::Incremental(_) => "incremental",
    };
    Ok(vec![
        base.record("direct", neurons, neurons.to_string()),
        other.record(method, neurons, cfg.variant.label()),
    ])
}
