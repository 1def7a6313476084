//! Exact merge in the `n < m₁ + m₂` regime, where subnetworks are solved
//! through their `n × n` kernels `A = I/alpha + H₁H₁ᵀ` and
//! `C = I/alpha + H₂H₂ᵀ`.
//!
//! The whole kernel is `A + H₂H₂ᵀ = C + H₁H₁ᵀ`; the Woodbury identity turns
//! each inverse into a correction of `A⁻¹` (resp. `C⁻¹`), so
//! `W = [W₁ − ΔW₁; W₂ − ΔW₂]` with
//!
//! ```text
//! ΔW₁ = H₁ᵀA⁻¹H₂ M₁⁻¹ H₂ᵀA⁻¹Y    M₁ = I + H₂ᵀA⁻¹H₂
//! ΔW₂ = H₂ᵀC⁻¹H₁ M₂⁻¹ H₁ᵀC⁻¹Y    M₂ = I + H₁ᵀC⁻¹H₁
//! ```

use faer::{Mat, MatRef};

use super::direct::{check_samples, KERNEL_NAME};
use super::RidgeConfig;
use crate::error::{ElmError, Result};
use crate::linalg::{self, SpdFactor};
use crate::model::{HiddenMatrix, LabelMatrix, OutputWeight};

/// `ΔW` for one side: `Hₛᵀ K⁻¹ H_o M⁻¹ H_oᵀ K⁻¹ Y` with `M = I + H_oᵀK⁻¹H_o`,
/// where `K` is the kernel of the side `Hₛ` and `H_o` the other side.
fn adjustment(
    own: &[MatRef<'_, f64>],
    own_kernel: &SpdFactor,
    other: &[MatRef<'_, f64>],
    y: MatRef<'_, f64>,
    m_name: &str,
) -> Result<Mat<f64>> {
    let n = own_kernel.dim();
    let m_other: usize = other.iter().map(|b| b.ncols()).sum();
    let mut h_other = Mat::<f64>::zeros(n, m_other);
    let mut col0 = 0;
    for b in other {
        h_other.as_mut().subcols_mut(col0, b.ncols()).copy_from(*b);
        col0 += b.ncols();
    }
    // P = L⁻¹H_o so that H_oᵀK⁻¹H_o = PᵀP
    let p = own_kernel.half_solve(h_other.as_ref());
    let q = own_kernel.half_solve(y);
    // I + PᵀP
    let m = linalg::regularized_gram(&[p.as_ref()], 1.0);
    let m_factor = SpdFactor::new(m_name, m.as_ref())?;

    let t = m_factor.solve(linalg::mul(p.transpose(), q.as_ref()).as_ref());
    let mut u = linalg::mul(p.as_ref(), t.as_ref());
    own_kernel.half_solve_transpose_in_place(u.as_mut());
    Ok(linalg::blocks_t_mul(own, u.as_ref()))
}

/// Merge on column-blocked hidden matrices with already factorized kernels.
/// Returns the merged weight and the stacked adjustment `ΔW`.
pub(crate) fn merge_dual_blocks(
    h1: &[MatRef<'_, f64>],
    a_factor: &SpdFactor,
    w1: MatRef<'_, f64>,
    h2: &[MatRef<'_, f64>],
    c_factor: &SpdFactor,
    w2: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
) -> Result<(Mat<f64>, Mat<f64>)> {
    let dw1 = adjustment(h1, a_factor, h2, y, "M_1")?;
    let dw2 = adjustment(h2, c_factor, h1, y, "M_2")?;
    let delta = linalg::vstack(dw1.as_ref(), dw2.as_ref());
    let stacked = linalg::vstack(w1, w2);
    Ok((&stacked - &delta, delta))
}

/// Whole-network solution from the two subnetwork dual solutions
/// `W₁ = H₁ᵀA⁻¹Y` and `W₂ = H₂ᵀC⁻¹Y`.
pub fn merge_dual(
    h1: &HiddenMatrix,
    h2: &HiddenMatrix,
    w1: &OutputWeight,
    w2: &OutputWeight,
    y: &LabelMatrix,
    cfg: &RidgeConfig,
) -> Result<OutputWeight> {
    merge_dual_with_adjustment(h1, h2, w1, w2, y, cfg).map(|(w, _)| w)
}

/// As [`merge_dual`], also returning the adjustment `ΔW = [ΔW₁; ΔW₂]`.
pub fn merge_dual_with_adjustment(
    h1: &HiddenMatrix,
    h2: &HiddenMatrix,
    w1: &OutputWeight,
    w2: &OutputWeight,
    y: &LabelMatrix,
    cfg: &RidgeConfig,
) -> Result<(OutputWeight, OutputWeight)> {
    let n = h1.sample_count();
    if h2.sample_count() != n {
        return Err(ElmError::invalid("subnetwork hidden matrices differ in sample count"));
    }
    check_samples(n, y)?;
    let (m1, m2) = (h1.hidden_count(), h2.hidden_count());
    if n >= m1 + m2 {
        return Err(ElmError::invalid(format!(
            "kernel-form merge needs n < m1 + m2, got n = {n}, m1 + m2 = {}",
            m1 + m2
        )));
    }
    if w1.hidden_count() != m1 || w2.hidden_count() != m2 {
        return Err(ElmError::invalid("subnetwork weights do not match hidden matrices"));
    }
    if w1.class_count() != y.class_count() || w2.class_count() != y.class_count() {
        return Err(ElmError::invalid("subnetwork weights do not match the label matrix"));
    }
    let a = linalg::regularized_row_gram(&[h1.values()], cfg.alpha());
    let a_factor = SpdFactor::new(&format!("A ({KERNEL_NAME}, first block)"), a.as_ref())?;
    let c = linalg::regularized_row_gram(&[h2.values()], cfg.alpha());
    let c_factor = SpdFactor::new(&format!("C ({KERNEL_NAME}, second block)"), c.as_ref())?;
    let (w, delta) = merge_dual_blocks(
        &[h1.values()],
        &a_factor,
        w1.values(),
        &[h2.values()],
        &c_factor,
        w2.values(),
        y.values(),
    )?;
    Ok((OutputWeight::new(w)?, OutputWeight::new(delta)?))
}
