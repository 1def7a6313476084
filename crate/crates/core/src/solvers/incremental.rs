//! Growing a trained network by blocks of hidden neurons.
//!
//! With the current `L` neurons as the first block and `l` new neurons as
//! the second, the grown solution is
//!
//! ```text
//! W⁽ᴸ⁺ˡ⁾ = P W⁽ᴸ⁾ − Q W⁽ˡ⁾     P = [E; −C⁻¹BᵀE]    Q = [S_C⁻¹B; −D]
//! ```
//!
//! where `W⁽ˡ⁾` is the new block trained on its own. Only the `L × L` Schur
//! complement is refactorized per step.

use faer::{Mat, MatRef};

use super::direct::{check_samples, dual_blocks, primal_blocks, regime_for, SolveRegime, GRAM_NAME};
use super::merge::MergeOperands;
use super::RidgeConfig;
use crate::error::{ElmError, Result};
use crate::linalg::{self, SpdFactor};
use crate::model::{compute_hidden_matrix, HiddenMatrix, LabelMatrix, OutputWeight, RandomFeatureMap};

/// A trained network that can be grown in place of retraining.
#[derive(Debug, Clone)]
pub struct IncrementalState {
    map: RandomFeatureMap,
    hidden: HiddenMatrix,
    weight: OutputWeight,
    gram: Mat<f64>,
    gram_factor: SpdFactor,
}

impl IncrementalState {
    pub fn map(&self) -> &RandomFeatureMap {
        &self.map
    }

    pub fn hidden(&self) -> &HiddenMatrix {
        &self.hidden
    }

    pub fn weight(&self) -> &OutputWeight {
        &self.weight
    }

    /// `I/alpha + HᵀH` of the current network.
    pub fn gram(&self) -> MatRef<'_, f64> {
        self.gram.as_ref()
    }

    pub fn gram_factor(&self) -> &SpdFactor {
        &self.gram_factor
    }

    pub fn hidden_count(&self) -> usize {
        self.map.hidden_count()
    }
}

/// Weight for a single block, solved in whichever form [`regime_for`]
/// picks, plus its Gram matrix and (when already available) its factor.
fn train_block(h: MatRef<'_, f64>, y: MatRef<'_, f64>, alpha: f64) -> Result<(Mat<f64>, Mat<f64>, Option<SpdFactor>)> {
    match regime_for(h.nrows(), h.ncols()) {
        SolveRegime::Primal => {
            let sol = primal_blocks(&[h], y, alpha)?;
            Ok((sol.weight, sol.gram, Some(sol.factor)))
        }
        SolveRegime::Dual => {
            let sol = dual_blocks(&[h], y, alpha)?;
            Ok((sol.weight, linalg::regularized_gram(&[h], alpha), None))
        }
    }
}

/// Trains the initial network on `samples` (`d × n`). The weight is the
/// [`super::solve_auto`] solution.
pub fn incremental_init(
    samples: MatRef<'_, f64>,
    y: &LabelMatrix,
    map: &RandomFeatureMap,
    cfg: &RidgeConfig,
) -> Result<IncrementalState> {
    let hidden = compute_hidden_matrix(map, samples)?;
    check_samples(hidden.sample_count(), y)?;
    let (weight, gram, factor) = train_block(hidden.values(), y.values(), cfg.alpha())?;
    let gram_factor = match factor {
        Some(f) => f,
        None => SpdFactor::new(GRAM_NAME, gram.as_ref())?,
    };
    Ok(IncrementalState { map: map.clone(), hidden, weight: OutputWeight::new(weight)?, gram, gram_factor })
}

/// Appends the neurons of `new_block` and updates the weight so that it
/// equals retraining the grown network from scratch.
pub fn incremental_add(
    state: IncrementalState,
    new_block: &RandomFeatureMap,
    samples: MatRef<'_, f64>,
    y: &LabelMatrix,
    cfg: &RidgeConfig,
) -> Result<IncrementalState> {
    if new_block.input_dim() != state.map.input_dim() {
        return Err(ElmError::invalid(format!(
            "new block expects {} inputs, the network has {}",
            new_block.input_dim(),
            state.map.input_dim()
        )));
    }
    if samples.ncols() != state.hidden.sample_count() {
        return Err(ElmError::invalid(format!(
            "network was trained on {} samples, got {}",
            state.hidden.sample_count(),
            samples.ncols()
        )));
    }
    check_samples(samples.ncols(), y)?;
    if y.class_count() != state.weight.class_count() {
        return Err(ElmError::invalid("label matrix does not match the trained weight"));
    }
    let h_new = compute_hidden_matrix(new_block, samples)?;
    let (w_new, c, c_factor) = train_block(h_new.values(), y.values(), cfg.alpha())?;
    let b = linalg::mul(state.hidden.values().transpose(), h_new.values());

    let ops = MergeOperands::from_blocks(state.gram, Some(state.gram_factor), b, c, c_factor)?;
    let weight = ops.apply(state.weight.values(), w_new.as_ref());
    let gram = ops.assemble();
    let (_, a_factor, b, c, _) = ops.into_factors();
    let (gram_factor, _) = a_factor.expect("passed in above").border(b.as_ref(), c.as_ref())?;

    Ok(IncrementalState {
        map: RandomFeatureMap::concat(&[state.map, new_block.clone()])?,
        hidden: HiddenMatrix::hconcat(&[&state.hidden, &h_new])?,
        weight: OutputWeight::new(weight)?,
        gram,
        gram_factor,
    })
}

/// The explicit update matrices `P` (`(L+l) × L`) and `Q` (`(L+l) × l`).
#[derive(Debug, Clone)]
pub struct UpdateOperators {
    pub p: Mat<f64>,
    pub q: Mat<f64>,
}

impl UpdateOperators {
    /// `P W⁽ᴸ⁾ − Q W⁽ˡ⁾`.
    pub fn apply(&self, w_old: &OutputWeight, w_new: &OutputWeight) -> Result<OutputWeight> {
        if w_old.hidden_count() != self.p.ncols() || w_new.hidden_count() != self.q.ncols() {
            return Err(ElmError::invalid("weights do not match the update operators"));
        }
        if w_old.class_count() != w_new.class_count() {
            return Err(ElmError::invalid("weights differ in class count"));
        }
        let pw = linalg::mul(self.p.as_ref(), w_old.values());
        OutputWeight::new(pw - linalg::mul(self.q.as_ref(), w_new.values()))
    }
}

/// `P` and `Q` read off the merge matrix `[[E, −S_C⁻¹B], [−C⁻¹BᵀE, D]]`.
pub fn update_operators(ops: &MergeOperands) -> UpdateOperators {
    let (l_old, l_new) = (ops.left_size(), ops.right_size());
    let z = ops.z_schur();
    let p = z.subcols(0, l_old).to_owned();
    let q = -z.subcols(l_old, l_new).to_owned();
    UpdateOperators { p, q }
}
