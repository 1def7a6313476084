//! Exact merge of two subnetwork solutions in the `n ≥ m₁ + m₂` regime.
//!
//! With `H = [H₁ H₂]` the whole network's regularized Gram matrix is the
//! block matrix `[[A, B], [Bᵀ, C]]` where
//!
//! ```text
//! A = I/alpha + H₁ᵀH₁    B = H₁ᵀH₂    C = I/alpha + H₂ᵀH₂
//! ```
//!
//! and its inverse follows from the Schur complement `S_C = A − B C⁻¹ Bᵀ`.
//! Substituting the subnetwork solutions `W₁ = A⁻¹H₁ᵀY`, `W₂ = C⁻¹H₂ᵀY`
//! gives the whole network's solution as a linear map of `[W₁; W₂]`:
//!
//! ```text
//! W = [ E            −S_C⁻¹B ] [W₁]     E = S_C⁻¹ A
//!     [ −C⁻¹BᵀE       D      ] [W₂]     D = I + C⁻¹Bᵀ S_C⁻¹ B
//! ```

use faer::{Mat, MatRef};

use super::RidgeConfig;
use crate::error::{ElmError, Result};
use crate::linalg::{self, SpdFactor};
use crate::model::{HiddenMatrix, OutputWeight};

/// Blocks `A`, `B`, `C` of a bipartitioned Gram matrix together with the
/// factorizations the merge needs.
///
/// Construction verifies that `C` and `S_C` are positive definite, which by
/// the block characterization of positive definiteness also certifies the
/// whole matrix (and hence `A` and `S_A`).
#[derive(Debug, Clone)]
pub struct MergeOperands {
    a: Mat<f64>,
    b: Mat<f64>,
    c: Mat<f64>,
    s_c: Mat<f64>,
    a_factor: Option<SpdFactor>,
    c_factor: SpdFactor,
    s_c_factor: SpdFactor,
    s_a_factor: Option<SpdFactor>,
    /// `C⁻¹Bᵀ`
    c_inv_bt: Mat<f64>,
}

impl MergeOperands {
    /// Assembles operands from precomputed blocks. Factors that are already
    /// known (for instance from the subnetwork solves) can be passed in.
    pub fn from_blocks(
        a: Mat<f64>,
        a_factor: Option<SpdFactor>,
        b: Mat<f64>,
        c: Mat<f64>,
        c_factor: Option<SpdFactor>,
    ) -> Result<Self> {
        let (m1, m2) = (a.nrows(), c.nrows());
        if a.ncols() != m1 || c.ncols() != m2 || b.nrows() != m1 || b.ncols() != m2 {
            return Err(ElmError::invalid(format!(
                "inconsistent block shapes: A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        linalg::check_symmetric("A", a.as_ref())?;
        if let Some(f) = &a_factor {
            if f.dim() != m1 {
                return Err(ElmError::invalid("factor of A has the wrong dimension"));
            }
        }
        let c_factor = match c_factor {
            Some(f) if f.dim() == m2 => f,
            Some(_) => return Err(ElmError::invalid("factor of C has the wrong dimension")),
            None => SpdFactor::new("C", c.as_ref())?,
        };
        // G = L_C⁻¹Bᵀ gives B C⁻¹ Bᵀ = GᵀG and C⁻¹Bᵀ = L_C⁻ᵀ G.
        let g = c_factor.half_solve(b.transpose());
        let s_c = linalg::schur_update(a.as_ref(), g.as_ref());
        let s_c_factor = SpdFactor::new("S_C", s_c.as_ref())?;
        let mut c_inv_bt = g;
        c_factor.half_solve_transpose_in_place(c_inv_bt.as_mut());
        Ok(Self {
            a,
            b,
            c,
            s_c,
            a_factor,
            c_factor,
            s_c_factor,
            s_a_factor: None,
            c_inv_bt,
        })
    }

    pub fn a(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }

    pub fn b(&self) -> MatRef<'_, f64> {
        self.b.as_ref()
    }

    pub fn c(&self) -> MatRef<'_, f64> {
        self.c.as_ref()
    }

    /// `S_C = A − B C⁻¹ Bᵀ`.
    pub fn schur_c(&self) -> MatRef<'_, f64> {
        self.s_c.as_ref()
    }

    pub fn c_factor(&self) -> &SpdFactor {
        &self.c_factor
    }

    pub fn schur_c_factor(&self) -> &SpdFactor {
        &self.s_c_factor
    }

    pub fn left_size(&self) -> usize {
        self.a.nrows()
    }

    pub fn right_size(&self) -> usize {
        self.c.nrows()
    }

    pub fn a_factor(&mut self) -> Result<&SpdFactor> {
        if self.a_factor.is_none() {
            self.a_factor = Some(SpdFactor::new("A", self.a.as_ref())?);
        }
        Ok(self.a_factor.as_ref().expect("set above"))
    }

    /// Factor of `S_A = C − Bᵀ A⁻¹ B`, computed on first use.
    pub fn schur_a_factor(&mut self) -> Result<&SpdFactor> {
        if self.s_a_factor.is_none() {
            self.a_factor()?;
            let a_factor = self.a_factor.as_ref().expect("set above");
            let g = a_factor.half_solve(self.b.as_ref());
            let s_a = linalg::schur_update(self.c.as_ref(), g.as_ref());
            self.s_a_factor = Some(SpdFactor::new("S_A", s_a.as_ref())?);
        }
        Ok(self.s_a_factor.as_ref().expect("set above"))
    }

    /// The full Gram matrix `[[A, B], [Bᵀ, C]]`.
    pub fn assemble(&self) -> Mat<f64> {
        let (m1, m2) = (self.left_size(), self.right_size());
        let mut out = Mat::<f64>::zeros(m1 + m2, m1 + m2);
        out.submatrix_mut(0, 0, m1, m1).copy_from(&self.a);
        out.submatrix_mut(0, m1, m1, m2).copy_from(&self.b);
        out.submatrix_mut(m1, 0, m2, m1).copy_from(self.b.transpose());
        out.submatrix_mut(m1, m1, m2, m2).copy_from(&self.c);
        out
    }

    /// Merge matrix written with `E = S_C⁻¹A` and `D = I + C⁻¹BᵀS_C⁻¹B`:
    /// `[[E, −S_C⁻¹B], [−C⁻¹BᵀE, D]]`.
    pub fn z_schur(&self) -> Mat<f64> {
        let (m1, m2) = (self.left_size(), self.right_size());
        let e = self.s_c_factor.solve(self.a.as_ref());
        let sc_inv_b = self.s_c_factor.solve(self.b.as_ref());
        let lower_left = linalg::mul(self.c_inv_bt.as_ref(), e.as_ref());
        let mut d = linalg::mul(self.c_inv_bt.as_ref(), sc_inv_b.as_ref());
        linalg::add_to_diagonal(d.as_mut(), 1.0);

        let mut z = Mat::<f64>::zeros(m1 + m2, m1 + m2);
        z.submatrix_mut(0, 0, m1, m1).copy_from(&e);
        z.submatrix_mut(0, m1, m1, m2).copy_from(-&sc_inv_b);
        z.submatrix_mut(m1, 0, m2, m1).copy_from(-&lower_left);
        z.submatrix_mut(m1, m1, m2, m2).copy_from(&d);
        z
    }

    /// Applies the merge to `[W₁; W₂]` without forming `Z`:
    /// the top block is `E W₁ − S_C⁻¹B W₂ = S_C⁻¹(A W₁ − B W₂)` and the bottom
    /// block `−C⁻¹BᵀE W₁ + D W₂` equals `W₂ − C⁻¹Bᵀ·top`.
    pub(crate) fn apply(&self, w1: MatRef<'_, f64>, w2: MatRef<'_, f64>) -> Mat<f64> {
        let mut top = linalg::mul(self.a.as_ref(), w1);
        top -= linalg::mul(self.b.as_ref(), w2);
        self.s_c_factor.solve_in_place(top.as_mut());
        let bottom = w2 - linalg::mul(self.c_inv_bt.as_ref(), top.as_ref());
        linalg::vstack(top.as_ref(), bottom.as_ref())
    }

    pub(crate) fn into_factors(self) -> (Mat<f64>, Option<SpdFactor>, Mat<f64>, Mat<f64>, SpdFactor) {
        (self.a, self.a_factor, self.b, self.c, self.c_factor)
    }
}

/// Builds `A`, `B`, `C` for `H = [H₁ H₂]` and factorizes `A`, `C` and `S_C`.
pub fn build_merge_operands(h1: &HiddenMatrix, h2: &HiddenMatrix, cfg: &RidgeConfig) -> Result<MergeOperands> {
    if h1.sample_count() != h2.sample_count() {
        return Err(ElmError::invalid(format!(
            "subnetwork hidden matrices have {} and {} samples",
            h1.sample_count(),
            h2.sample_count()
        )));
    }
    let a = linalg::regularized_gram(&[h1.values()], cfg.alpha());
    let a_factor = SpdFactor::new("A", a.as_ref())?;
    let c = linalg::regularized_gram(&[h2.values()], cfg.alpha());
    let b = linalg::mul(h1.values().transpose(), h2.values());
    MergeOperands::from_blocks(a, Some(a_factor), b, c, None)
}

/// Whole-network solution from the two subnetwork primal solutions.
pub fn merge_primal(ops: &MergeOperands, w1: &OutputWeight, w2: &OutputWeight) -> Result<OutputWeight> {
    if w1.hidden_count() != ops.left_size() || w2.hidden_count() != ops.right_size() {
        return Err(ElmError::invalid(format!(
            "weights have {} and {} rows, operands expect {} and {}",
            w1.hidden_count(),
            w2.hidden_count(),
            ops.left_size(),
            ops.right_size()
        )));
    }
    if w1.class_count() != w2.class_count() {
        return Err(ElmError::invalid("subnetwork weights differ in class count"));
    }
    OutputWeight::new(ops.apply(w1.values(), w2.values()))
}

/// Explicit merge matrices built from both Schur complements.
#[derive(Debug, Clone)]
pub struct MergeMatrices {
    /// `[[S_C⁻¹A, −S_C⁻¹B], [−S_A⁻¹Bᵀ, S_A⁻¹C]]`
    pub z: Mat<f64>,
    /// `blockdiag(S_C⁻¹, S_A⁻¹) · [[A, −B], [−Bᵀ, C]]`, the same matrix as a
    /// product.
    pub z_factored: Mat<f64>,
}

impl MergeMatrices {
    /// `Z [W₁; W₂]` with the blockwise form.
    pub fn apply(&self, w1: &OutputWeight, w2: &OutputWeight) -> Result<OutputWeight> {
        self.apply_with(&self.z, w1, w2)
    }

    /// `Z [W₁; W₂]` with the product form.
    pub fn apply_factored(&self, w1: &OutputWeight, w2: &OutputWeight) -> Result<OutputWeight> {
        self.apply_with(&self.z_factored, w1, w2)
    }

    fn apply_with(&self, z: &Mat<f64>, w1: &OutputWeight, w2: &OutputWeight) -> Result<OutputWeight> {
        let stacked = OutputWeight::vstack(&[w1, w2])?;
        if stacked.hidden_count() != z.ncols() {
            return Err(ElmError::invalid("stacked weights do not match the merge matrix"));
        }
        OutputWeight::new(linalg::mul(z.as_ref(), stacked.values()))
    }
}

pub fn build_z_symmetric(ops: &mut MergeOperands) -> Result<MergeMatrices> {
    let (m1, m2) = (ops.left_size(), ops.right_size());
    let s_c_inv = ops.s_c_factor.inverse();
    let s_a_inv = ops.schur_a_factor()?.inverse();

    let mut z = Mat::<f64>::zeros(m1 + m2, m1 + m2);
    z.submatrix_mut(0, 0, m1, m1)
        .copy_from(ops.s_c_factor.solve(ops.a()));
    z.submatrix_mut(0, m1, m1, m2)
        .copy_from(-ops.s_c_factor.solve(ops.b()));
    let s_a = ops.schur_a_factor()?.clone();
    z.submatrix_mut(m1, 0, m2, m1)
        .copy_from(-s_a.solve(ops.b().transpose()));
    z.submatrix_mut(m1, m1, m2, m2).copy_from(s_a.solve(ops.c()));

    let mut blockdiag = Mat::<f64>::zeros(m1 + m2, m1 + m2);
    blockdiag.submatrix_mut(0, 0, m1, m1).copy_from(&s_c_inv);
    blockdiag.submatrix_mut(m1, m1, m2, m2).copy_from(&s_a_inv);
    let mut signed = ops.assemble();
    signed.submatrix_mut(0, m1, m1, m2).copy_from(-ops.b());
    signed.submatrix_mut(m1, 0, m2, m1).copy_from(-ops.b().transpose());
    let z_factored = linalg::mul(blockdiag.as_ref(), signed.as_ref());

    Ok(MergeMatrices { z, z_factored })
}
