use faer::{Mat, MatRef};

use super::RidgeConfig;
use crate::error::{ElmError, Result};
use crate::linalg::{self, SpdFactor};
use crate::model::{HiddenMatrix, LabelMatrix, OutputWeight};

pub(crate) const GRAM_NAME: &str = "I/alpha + H^T H";
pub(crate) const KERNEL_NAME: &str = "I/alpha + H H^T";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveRegime {
    /// Factorize the `m × m` system; used when `n ≥ m`.
    Primal,
    /// Factorize the `n × n` system; used when `n < m`.
    Dual,
}

/// Samples `n`, neurons `m`. Ties go to the primal form.
pub fn regime_for(sample_count: usize, hidden_count: usize) -> SolveRegime {
    if sample_count >= hidden_count {
        SolveRegime::Primal
    } else {
        SolveRegime::Dual
    }
}

pub(crate) fn check_samples(h_rows: usize, y: &LabelMatrix) -> Result<()> {
    if h_rows != y.sample_count() {
        return Err(ElmError::invalid(format!(
            "hidden matrix has {h_rows} samples but the label matrix has {}",
            y.sample_count()
        )));
    }
    Ok(())
}

/// Solution of the `m × m` system for a column-blocked hidden matrix.
pub(crate) struct PrimalSolution {
    pub weight: Mat<f64>,
    pub gram: Mat<f64>,
    pub factor: SpdFactor,
}

pub(crate) fn primal_blocks(
    blocks: &[MatRef<'_, f64>],
    y: MatRef<'_, f64>,
    alpha: f64,
) -> Result<PrimalSolution> {
    let gram = linalg::regularized_gram(blocks, alpha);
    let factor = SpdFactor::new(GRAM_NAME, gram.as_ref())?;
    let mut weight = linalg::blocks_t_mul(blocks, y);
    factor.solve_in_place(weight.as_mut());
    Ok(PrimalSolution { weight, gram, factor })
}

/// Solution of the `n × n` system for a column-blocked hidden matrix.
pub(crate) struct DualSolution {
    pub weight: Mat<f64>,
    pub factor: SpdFactor,
}

pub(crate) fn dual_blocks(
    blocks: &[MatRef<'_, f64>],
    y: MatRef<'_, f64>,
    alpha: f64,
) -> Result<DualSolution> {
    let factor = SpdFactor::new(KERNEL_NAME, linalg::regularized_row_gram(blocks, alpha).as_ref())?;
    let beta = factor.solve(y);
    let weight = linalg::blocks_t_mul(blocks, beta.as_ref());
    Ok(DualSolution { weight, factor })
}

/// `W = (HᵀH + I/alpha)⁻¹ HᵀY` through a Cholesky factorization.
pub fn solve_primal(h: &HiddenMatrix, y: &LabelMatrix, cfg: &RidgeConfig) -> Result<OutputWeight> {
    check_samples(h.sample_count(), y)?;
    let sol = primal_blocks(&[h.values()], y.values(), cfg.alpha())?;
    OutputWeight::new(sol.weight)
}

/// `W = Hᵀ(HHᵀ + I/alpha)⁻¹ Y`, identical to [`solve_primal`] in exact
/// arithmetic but factorizing the `n × n` kernel instead.
pub fn solve_dual(h: &HiddenMatrix, y: &LabelMatrix, cfg: &RidgeConfig) -> Result<OutputWeight> {
    check_samples(h.sample_count(), y)?;
    let sol = dual_blocks(&[h.values()], y.values(), cfg.alpha())?;
    OutputWeight::new(sol.weight)
}

/// Picks the smaller system, see [`regime_for`].
pub fn solve_auto(h: &HiddenMatrix, y: &LabelMatrix, cfg: &RidgeConfig) -> Result<OutputWeight> {
    match regime_for(h.sample_count(), h.hidden_count()) {
        SolveRegime::Primal => solve_primal(h, y, cfg),
        SolveRegime::Dual => solve_dual(h, y, cfg),
    }
}
