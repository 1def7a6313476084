//! Randomized invariant checks behind `elm selftest`.

use std::fmt;
use std::time::Instant;

use faer::Mat;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::one_hot;
use crate::error::Result;
use crate::eval::{classify, relative_diff, scores};
use crate::model::{
    compute_hidden_matrix, generate_feature_map, ActivationKind, HiddenMatrix, LabelMatrix, OutputWeight, RandomFeatureMap,
};
use crate::solvers::{
    build_merge_operands, build_z_symmetric, incremental_add, incremental_init, merge_dual, merge_primal, solve_auto,
    solve_dual, solve_primal, RidgeConfig,
};

pub const EQUIVALENCE_TOL: f64 = 1e-9;
pub const Z_FORM_TOL: f64 = 1e-10;
/// Largest alpha at which the cross-form checks are run.
pub const CROSS_FORM_MAX_ALPHA: f64 = 1e3;

const ALPHAS: [f64; 3] = [1.0, 1e3, 1e6];

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the second subnetwork's weight before merging.
    SignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelftestConfig {
    pub trials: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self { trials: 200, seed: 0, fault: None }
    }
}

/// One randomly drawn problem. Trial `t` cycles deterministically through
/// regime, activation, class count and alpha so that every combination
/// appears once per 24 trials; sizes and data are random.
#[derive(Debug, Clone)]
pub struct Instance {
    /// `d × n`.
    pub samples: Mat<f64>,
    pub map: RandomFeatureMap,
    pub hidden: HiddenMatrix,
    pub labels: LabelMatrix,
    pub left: usize,
    pub ridge: RidgeConfig,
    pub activation: ActivationKind,
    /// Neuron block sizes for the incremental check.
    pub schedule: Vec<usize>,
}

impl Instance {
    pub fn draw(seed: u64, trial: usize) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64));
        let primal = trial.is_multiple_of(2);
        let activation = if (trial / 2).is_multiple_of(2) { ActivationKind::Sigmoid } else { ActivationKind::RadialBasis };
        let c = if (trial / 4).is_multiple_of(2) { 1 } else { 10 };
        let alpha = ALPHAS[(trial / 8) % 3];

        // Sizes stay a factor of two away from n = m, where H is closest to
        // rank deficient.
        let (n, m1, m2) = if primal {
            let (m1, m2) = (rng.random_range(1..=12), rng.random_range(1..=12));
            (rng.random_range(2 * (m1 + m2)..=4 * (m1 + m2)), m1, m2)
        } else {
            let n = rng.random_range(2..=12);
            let m = rng.random_range(2 * n..=4 * n);
            let m1 = rng.random_range(1..m);
            (n, m1, m - m1)
        };
        let d = rng.random_range(4..=16);
        let x = Mat::from_fn(d, n, |_, _| rng.random_range(-1.0..=1.0));
        let map = generate_feature_map(d, m1 + m2, activation, rng.random())?;
        let hidden = compute_hidden_matrix(&map, x.as_ref())?;
        let labels = if c == 1 {
            LabelMatrix::new(Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..=1.0)))?
        } else {
            let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            one_hot(&ids, c)?
        };

        let m = m1 + m2;
        let k = (1 + trial % 8).min(m);
        let schedule = (0..k).map(|i| m / k + usize::from(i < m % k)).collect();
        Ok(Self { samples: x, map, hidden, labels, left: m1, ridge: RidgeConfig::new(alpha)?, activation, schedule })
    }

    pub fn is_primal(&self) -> bool {
        self.hidden.sample_count() >= self.hidden.hidden_count()
    }

    pub fn blocks(&self) -> (HiddenMatrix, HiddenMatrix) {
        let h = self.hidden.values();
        let m2 = h.ncols() - self.left;
        (
            HiddenMatrix::new(h.subcols(0, self.left).to_owned()).expect("finite"),
            HiddenMatrix::new(h.subcols(self.left, m2).to_owned()).expect("finite"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// `A`, `C`, `S_C` and `S_A` all factorize.
    PdChain,
    /// Merged weight equals the direct solve in the matching regime.
    MergeEquivalence,
    PrimalDual,
    /// The merge path and both explicit `Z` forms agree.
    ZConsistency,
    /// Growing block by block equals training from scratch, with identical
    /// predicted labels.
    IncrementalBatch,
}

impl Check {
    pub const ALL: [Check; 5] =
        [Check::PdChain, Check::MergeEquivalence, Check::PrimalDual, Check::ZConsistency, Check::IncrementalBatch];

    /// Whether the check is meaningful at double precision for `inst`.
    /// The explicit operators and the growth path are primal-form
    /// constructions; solving in the mismatched regime at large alpha has a
    /// condition number near `alpha·‖H‖²`, and an explicit `Z` then has
    /// entries large enough that `Z [W₁; W₂]` cancels away digits.
    pub fn applies(self, inst: &Instance) -> bool {
        let moderate = inst.ridge.alpha() <= CROSS_FORM_MAX_ALPHA;
        match self {
            Check::PdChain | Check::MergeEquivalence => true,
            Check::PrimalDual => moderate,
            Check::ZConsistency => inst.is_primal() && moderate,
            Check::IncrementalBatch => inst.is_primal(),
        }
    }

    /// Runs the check on `inst` whether or not it [applies](Self::applies).
    /// `Ok` carries the measured relative difference, `Err` the reason for
    /// failure.
    pub fn run(self, inst: &Instance, fault: Option<Fault>) -> std::result::Result<f64, String> {
        match self {
            Check::PdChain => check_pd(inst),
            Check::MergeEquivalence => check_merge(inst, fault),
            Check::PrimalDual => check_primal_dual(inst),
            Check::ZConsistency => check_z(inst),
            Check::IncrementalBatch => check_incremental(inst),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Check::PdChain => "pd-chain",
            Check::MergeEquivalence => "merge-equivalence",
            Check::PrimalDual => "primal-dual",
            Check::ZConsistency => "z-consistency",
            Check::IncrementalBatch => "incremental-batch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckTally {
    pub check: Check,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Largest relative difference seen (0 for pass/fail-only checks).
    pub worst: f64,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestSummary {
    pub trials: usize,
    pub tallies: Vec<CheckTally>,
    pub seconds: f64,
}

impl SelftestSummary {
    pub fn all_passed(&self) -> bool {
        self.tallies.iter().all(|t| t.failed == 0)
    }

    pub fn tally(&self, check: Check) -> &CheckTally {
        self.tallies.iter().find(|t| t.check == check).expect("every check is tallied")
    }
}

impl fmt::Display for SelftestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tallies {
            writeln!(
                f,
                "{:<18} passed {:>4}  failed {:>4}  skipped {:>4}  worst rel diff {:.2e}",
                t.check.name(),
                t.passed,
                t.failed,
                t.skipped,
                t.worst
            )?;
            if let Some(msg) = &t.first_failure {
                writeln!(f, "  first failure: {msg}")?;
            }
        }
        writeln!(
            f,
            "{} trials in {:.2} s: {}",
            self.trials,
            self.seconds,
            if self.all_passed() { "all checks passed" } else { "FAILURES" }
        )
    }
}

type Outcome = std::result::Result<f64, String>;

fn within(rel: f64, tol: f64) -> Outcome {
    if rel <= tol {
        Ok(rel)
    } else {
        Err(format!("relative difference {rel:.3e} exceeds {tol:e}"))
    }
}

fn rel(a: &OutputWeight, b: &OutputWeight) -> std::result::Result<f64, String> {
    relative_diff(a, b).map_err(|e| e.to_string())
}

fn check_pd(inst: &Instance) -> Outcome {
    let (h1, h2) = inst.blocks();
    let mut ops = build_merge_operands(&h1, &h2, &inst.ridge).map_err(|e| e.to_string())?;
    ops.schur_a_factor().map_err(|e| e.to_string())?;
    Ok(0.0)
}

fn check_merge(inst: &Instance, fault: Option<Fault>) -> Outcome {
    let (h1, h2) = inst.blocks();
    let (y, cfg) = (&inst.labels, &inst.ridge);
    let err = |e: crate::error::ElmError| e.to_string();
    let n = inst.hidden.sample_count();
    let flip = |w: OutputWeight| match fault {
        Some(Fault::SignFlip) => {
            let v = w.values();
            OutputWeight::new(Mat::from_fn(v.nrows(), v.ncols(), |i, j| -v[(i, j)])).expect("finite")
        }
        None => w,
    };
    let (merged, direct) = if n >= inst.hidden.hidden_count() {
        let ops = build_merge_operands(&h1, &h2, cfg).map_err(err)?;
        let w1 = solve_primal(&h1, y, cfg).map_err(err)?;
        let w2 = flip(solve_primal(&h2, y, cfg).map_err(err)?);
        (merge_primal(&ops, &w1, &w2).map_err(err)?, solve_primal(&inst.hidden, y, cfg).map_err(err)?)
    } else {
        let w1 = solve_dual(&h1, y, cfg).map_err(err)?;
        let w2 = flip(solve_dual(&h2, y, cfg).map_err(err)?);
        (merge_dual(&h1, &h2, &w1, &w2, y, cfg).map_err(err)?, solve_dual(&inst.hidden, y, cfg).map_err(err)?)
    };
    within(rel(&merged, &direct)?, EQUIVALENCE_TOL)
}

fn check_primal_dual(inst: &Instance) -> Outcome {
    let err = |e: crate::error::ElmError| e.to_string();
    let p = solve_primal(&inst.hidden, &inst.labels, &inst.ridge).map_err(err)?;
    let d = solve_dual(&inst.hidden, &inst.labels, &inst.ridge).map_err(err)?;
    within(rel(&d, &p)?, EQUIVALENCE_TOL)
}

fn check_z(inst: &Instance) -> Outcome {
    let err = |e: crate::error::ElmError| e.to_string();
    let (h1, h2) = inst.blocks();
    let (y, cfg) = (&inst.labels, &inst.ridge);
    let mut ops = build_merge_operands(&h1, &h2, cfg).map_err(err)?;
    let w1 = solve_auto(&h1, y, cfg).map_err(err)?;
    let w2 = solve_auto(&h2, y, cfg).map_err(err)?;
    let merged = merge_primal(&ops, &w1, &w2).map_err(err)?;
    let z = build_z_symmetric(&mut ops).map_err(err)?;
    let explicit = z.apply(&w1, &w2).map_err(err)?;
    let factored = z.apply_factored(&w1, &w2).map_err(err)?;
    let worst = rel(&explicit, &merged)?.max(rel(&factored, &merged)?).max(rel(&factored, &explicit)?);
    within(worst, Z_FORM_TOL)
}

fn check_incremental(inst: &Instance) -> Outcome {
    let err = |e: crate::error::ElmError| e.to_string();
    let (x, y, cfg) = (inst.samples.as_ref(), &inst.labels, &inst.ridge);
    let mut start = inst.schedule[0];
    let mut state = incremental_init(x, y, &inst.map.slice(0, start).map_err(err)?, cfg).map_err(err)?;
    for &len in &inst.schedule[1..] {
        state = incremental_add(state, &inst.map.slice(start, len).map_err(err)?, x, y, cfg).map_err(err)?;
        start += len;
    }
    let direct = solve_auto(&inst.hidden, y, cfg).map_err(err)?;
    let r = within(rel(state.weight(), &direct)?, EQUIVALENCE_TOL)?;
    if inst.labels.class_count() > 1 {
        let a = classify(scores(&inst.hidden, state.weight()).map_err(err)?.as_ref());
        let b = classify(scores(&inst.hidden, &direct).map_err(err)?.as_ref());
        if a != b {
            return Err("incremental and direct predictions differ".into());
        }
    }
    Ok(r)
}

pub fn run_selftest(cfg: &SelftestConfig) -> SelftestSummary {
    let start = Instant::now();
    let mut tallies: Vec<CheckTally> = Check::ALL
        .iter()
        .map(|&check| CheckTally { check, passed: 0, failed: 0, skipped: 0, worst: 0.0, first_failure: None })
        .collect();
    let mut record = |check: Check, trial: usize, outcome: Option<Outcome>| {
        let t = tallies.iter_mut().find(|t| t.check == check).expect("every check is tallied");
        match outcome {
            None => t.skipped += 1,
            Some(Ok(r)) => {
                t.passed += 1;
                t.worst = t.worst.max(r);
            }
            Some(Err(msg)) => {
                t.failed += 1;
                t.first_failure.get_or_insert(format!("trial {trial}: {msg}"));
            }
        }
    };
    for trial in 0..cfg.trials {
        let inst = match Instance::draw(cfg.seed, trial) {
            Ok(inst) => inst,
            Err(e) => {
                for check in Check::ALL {
                    record(check, trial, Some(Err(e.to_string())));
                }
                continue;
            }
        };
        for check in Check::ALL {
            let outcome = check.applies(&inst).then(|| check.run(&inst, cfg.fault));
            record(check, trial, outcome);
        }
    }
    SelftestSummary { trials: cfg.trials, tallies, seconds: start.elapsed().as_secs_f64() }
}
