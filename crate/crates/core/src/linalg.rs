//! Dense kernels shared by the solvers.
//!
//! Every kernel runs single-threaded. Parallelism lives one level up, across
//! independent subnetwork solves, so that timings of the direct and the
//! divide-and-merge paths measure the same per-core work.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::error::{ElmError, Result};

pub(crate) const PAR: Par = Par::Seq;

/// Relative asymmetry tolerated before a matrix is refused as non-symmetric.
const SYMMETRY_TOL: f64 = 1e-10;

/// Cholesky factor `L` (lower triangular) of a symmetric positive definite
/// matrix `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Mat<f64>,
}

impl SpdFactor {
    /// Factorizes `a`, which must be square, finite, symmetric and positive
    /// definite. `name` identifies the operand in error messages.
    pub fn new(name: &str, a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ElmError::numeric(
                name,
                format!("expected a square matrix, got {}x{}", n, a.ncols()),
            ));
        }
        check_symmetric(name, a)?;

        let mut lower = Mat::<f64>::zeros(n, n);
        lower.copy_from_triangular_lower(a);
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, PAR, Default::default()));
        let stack = MemStack::new(&mut mem);
        cholesky_in_place(lower.as_mut(), Default::default(), PAR, stack, Default::default())
            .map_err(|e| ElmError::numeric(name, format!("not positive definite ({e})")))?;
        for j in 0..n {
            for i in 0..j {
                lower[(i, j)] = 0.0;
            }
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> MatRef<'_, f64> {
        self.lower.as_ref()
    }

    /// `M⁻¹ rhs`.
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = rhs.to_owned();
        self.solve_in_place(out.as_mut());
        out
    }

    pub fn solve_in_place(&self, mut rhs: MatMut<'_, f64>) {
        solve_lower_triangular_in_place(self.lower.as_ref(), rhs.as_mut(), PAR);
        solve_upper_triangular_in_place(self.lower.transpose(), rhs, PAR);
    }

    /// `L⁻¹ rhs`.
    pub fn half_solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = rhs.to_owned();
        solve_lower_triangular_in_place(self.lower.as_ref(), out.as_mut(), PAR);
        out
    }

    /// `L⁻ᵀ rhs`, in place.
    pub fn half_solve_transpose_in_place(&self, rhs: MatMut<'_, f64>) {
        solve_upper_triangular_in_place(self.lower.transpose(), rhs, PAR);
    }

    /// Explicit `M⁻¹`. Only used to assemble diagnostic merge matrices.
    pub fn inverse(&self) -> Mat<f64> {
        self.solve(Mat::<f64>::identity(self.dim(), self.dim()).as_ref())
    }

    /// Given this factor of `A`, factorizes the bordered matrix
    /// `[[A, B], [Bᵀ, C]]` through the Schur complement `S_A = C − BᵀA⁻¹B`.
    ///
    /// Returns the factor of the bordered matrix and the factor of `S_A`.
    pub fn border(
        &self,
        b: MatRef<'_, f64>,
        c: MatRef<'_, f64>,
    ) -> Result<(SpdFactor, SpdFactor)> {
        let m1 = self.dim();
        let m2 = c.nrows();
        // G = L_A⁻¹ B, so Bᵀ A⁻¹ B = Gᵀ G
        let g = self.half_solve(b);
        let s_a = schur_update(c, g.as_ref());
        let s_a_factor = SpdFactor::new("S_A", s_a.as_ref())?;

        let mut lower = Mat::<f64>::zeros(m1 + m2, m1 + m2);
        lower.submatrix_mut(0, 0, m1, m1).copy_from(self.lower.as_ref());
        lower.submatrix_mut(m1, 0, m2, m1).copy_from(g.transpose());
        lower
            .submatrix_mut(m1, m1, m2, m2)
            .copy_from(s_a_factor.lower.as_ref());
        Ok((SpdFactor { lower }, s_a_factor))
    }
}

/// Rejects non-finite or (beyond a relative tolerance) asymmetric square
/// matrices.
pub(crate) fn check_symmetric(name: &str, a: MatRef<'_, f64>) -> Result<()> {
    let n = a.nrows();
    let mut scale = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(ElmError::numeric(name, format!("non-finite entry at ({i}, {j})")));
            }
            scale = scale.max(v.abs());
        }
    }
    let tol = SYMMETRY_TOL * scale.max(1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(ElmError::numeric(
                    name,
                    format!("not symmetric: entries ({i}, {j}) and ({j}, {i}) differ"),
                ));
            }
        }
    }
    Ok(())
}

/// `base − Gᵀ G`, computed on the lower triangle and mirrored so the result
/// is exactly symmetric.
pub(crate) fn schur_update(base: MatRef<'_, f64>, g: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = base.to_owned();
    tri_matmul(
        out.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Add,
        g.transpose(),
        BlockStructure::Rectangular,
        g,
        BlockStructure::Rectangular,
        -1.0,
        PAR,
    );
    mirror_lower(out.as_mut());
    out
}

/// `I/alpha + Σᵢ Hᵢᵀ Hᵢ` for the column blocks of `H = [H₁ … H_k]`, i.e. the
/// regularized Gram matrix of the concatenation.
pub(crate) fn regularized_gram(blocks: &[MatRef<'_, f64>], alpha: f64) -> Mat<f64> {
    let widths: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    let m: usize = widths.iter().sum();
    let mut out = Mat::<f64>::zeros(m, m);
    let mut col0 = 0;
    for (j, bj) in blocks.iter().enumerate() {
        let mut row0 = col0;
        for (i, bi) in blocks.iter().enumerate().skip(j) {
            let dst = out.as_mut().submatrix_mut(row0, col0, bi.ncols(), bj.ncols());
            if i == j {
                tri_matmul(
                    dst,
                    BlockStructure::TriangularLower,
                    Accum::Replace,
                    bi.transpose(),
                    BlockStructure::Rectangular,
                    *bj,
                    BlockStructure::Rectangular,
                    1.0,
                    PAR,
                );
            } else {
                matmul(dst, Accum::Replace, bi.transpose(), *bj, 1.0, PAR);
            }
            row0 += bi.ncols();
        }
        col0 += bj.ncols();
    }
    mirror_lower(out.as_mut());
    add_to_diagonal(out.as_mut(), 1.0 / alpha);
    out
}

/// `I/alpha + Σᵢ Hᵢ Hᵢᵀ`, the regularized n×n kernel matrix.
pub(crate) fn regularized_row_gram(blocks: &[MatRef<'_, f64>], alpha: f64) -> Mat<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let mut out = Mat::<f64>::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        tri_matmul(
            out.as_mut(),
            BlockStructure::TriangularLower,
            if k == 0 { Accum::Replace } else { Accum::Add },
            *b,
            BlockStructure::Rectangular,
            b.transpose(),
            BlockStructure::Rectangular,
            1.0,
            PAR,
        );
    }
    mirror_lower(out.as_mut());
    add_to_diagonal(out.as_mut(), 1.0 / alpha);
    out
}

/// `Hᵀ R` for `H = [H₁ … H_k]`, stacked block by block.
pub(crate) fn blocks_t_mul(blocks: &[MatRef<'_, f64>], rhs: MatRef<'_, f64>) -> Mat<f64> {
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::<f64>::zeros(m, rhs.ncols());
    let mut row0 = 0;
    for b in blocks {
        let dst = out.as_mut().subrows_mut(row0, b.ncols());
        matmul(dst, Accum::Replace, b.transpose(), rhs, 1.0, PAR);
        row0 += b.ncols();
    }
    out
}

/// `Lᵀ R` where `L = [L₁ … L_p]` and `R = [R₁ … R_q]` are column-blocked.
pub(crate) fn blocks_cross(left: &[MatRef<'_, f64>], right: &[MatRef<'_, f64>]) -> Mat<f64> {
    let m1: usize = left.iter().map(|b| b.ncols()).sum();
    let m2: usize = right.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::<f64>::zeros(m1, m2);
    let mut row0 = 0;
    for l in left {
        let mut col0 = 0;
        for r in right {
            let dst = out.as_mut().submatrix_mut(row0, col0, l.ncols(), r.ncols());
            matmul(dst, Accum::Replace, l.transpose(), *r, 1.0, PAR);
            col0 += r.ncols();
        }
        row0 += l.ncols();
    }
    out
}

pub(crate) fn mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, PAR);
    out
}

pub(crate) fn mirror_lower(mut m: MatMut<'_, f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = m[(i, j)];
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn add_to_diagonal(mut m: MatMut<'_, f64>, value: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += value;
    }
}

/// Stacks `top` above `bottom`.
pub(crate) fn vstack(top: MatRef<'_, f64>, bottom: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.subrows_mut(0, top.nrows()).copy_from(top);
    out.subrows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}
