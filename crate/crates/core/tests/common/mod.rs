//! Reference implementations that share no code with the library: scalar
//! loops and Gaussian elimination with partial pivoting.

#![allow(dead_code, clippy::needless_range_loop)]

use elmnet::model::{ActivationKind, RandomFeatureMap};
use faer::{Mat, MatRef};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha20Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(lo..=hi))
}

/// Solves `A X = B` by elimination with partial pivoting. Panics on a
/// singular pivot.
pub fn gauss_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let k = b.ncols();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).chain((0..k).map(|j| b[(i, j)])).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        assert!(m[pivot][col].abs() > 0.0, "singular matrix");
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for j in col..n + k {
                    m[row][j] -= f * m[col][j];
                }
            }
        }
    }
    let mut x = Mat::<f64>::zeros(n, k);
    for j in 0..k {
        for i in (0..n).rev() {
            let mut s = m[i][n + j];
            for p in i + 1..n {
                s -= m[i][p] * x[(p, j)];
            }
            x[(i, j)] = s / m[i][i];
        }
    }
    x
}

/// Determinant by elimination; used for leading-minor positivity checks.
pub fn determinant(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(col, pivot);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for j in col..n {
                m[row][j] -= f * m[col][j];
            }
        }
    }
    det
}

/// Sylvester's criterion.
pub fn is_positive_definite(a: MatRef<'_, f64>) -> bool {
    (1..=a.nrows()).all(|k| determinant(a.submatrix(0, 0, k, k)) > 0.0)
}

pub fn naive_mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!(a.ncols(), b.nrows());
    Mat::from_fn(a.nrows(), b.ncols(), |i, j| (0..a.ncols()).map(|p| a[(i, p)] * b[(p, j)]).sum())
}

pub fn transpose(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

/// `(HᵀH + I/alpha)⁻¹ HᵀY` from the normal equations.
pub fn ridge_oracle(h: MatRef<'_, f64>, y: MatRef<'_, f64>, alpha: f64) -> Mat<f64> {
    let ht = transpose(h);
    let mut g = naive_mul(ht.as_ref(), h);
    for i in 0..g.nrows() {
        g[(i, i)] += 1.0 / alpha;
    }
    gauss_solve(g.as_ref(), naive_mul(ht.as_ref(), y).as_ref())
}

/// Entry `(i, j)` is `g(x_i; a_j, b_j)`, evaluated one scalar at a time.
pub fn naive_hidden(map: &RandomFeatureMap, x: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(x.ncols(), map.hidden_count(), |i, j| {
        let a = map.weight_row(j);
        let b = map.biases()[j];
        match map.activation() {
            ActivationKind::Sigmoid => {
                let mut dot = 0.0;
                for k in 0..a.len() {
                    dot += x[(k, i)] * a[k];
                }
                1.0 / (1.0 + (dot + b).exp())
            }
            ActivationKind::RadialBasis => {
                let mut sq = 0.0;
                for k in 0..a.len() {
                    sq += (x[(k, i)] - a[k]).powi(2);
                }
                (-b * sq.sqrt()).exp()
            }
        }
    })
}

pub fn frob(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let d = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)]);
    frob(d.as_ref()) / frob(b)
}

pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}
