//! Random feature maps, hidden-layer matrices and the matrix newtypes used
//! across the crate.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};

/// Generator used for every random draw in the crate; recorded in reports.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha, seed_from_u64)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    /// `g(x; a, b) = 1 / (1 + exp(xᵀa + b))`
    #[serde(rename = "sigmoid")]
    Sigmoid,
    /// `g(x; a, b) = exp(−b ‖x − a‖)`
    #[serde(rename = "radbas")]
    RadialBasis,
}

impl ActivationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::RadialBasis => "radbas",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationKind {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Self::Sigmoid),
            "radbas" => Ok(Self::RadialBasis),
            other => Err(ElmError::invalid(format!(
                "unknown activation {other:?} (expected \"sigmoid\" or \"radbas\")"
            ))),
        }
    }
}

/// Frozen input-to-hidden parameters of an ELM network.
///
/// Neuron `j` has weight vector `a_j` (row `j` of an `m × d` matrix, stored
/// row-major) and bias `b_j`. Weights are uniform on `[-1, 1]`; biases are
/// uniform on `[-1, 1]` for sigmoid neurons and on `(0, 1]` for radial-basis
/// neurons so that `exp(−b‖x − a‖)` stays bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureMap {
    input_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: ActivationKind,
    seed: u64,
}

impl RandomFeatureMap {
    /// Builds a map from explicit parameters. `weights` is row-major `m × d`.
    pub fn from_parts(
        input_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: ActivationKind,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || biases.is_empty() {
            return Err(ElmError::invalid("feature map needs input_dim >= 1 and at least one neuron"));
        }
        if weights.len() != input_dim * biases.len() {
            return Err(ElmError::invalid(format!(
                "weights hold {} values, expected {} x {}",
                weights.len(),
                biases.len(),
                input_dim
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(ElmError::InvalidData("feature map parameters must be finite".into()));
        }
        Ok(Self {
            input_dim,
            weights,
            biases,
            activation,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_count(&self) -> usize {
        self.biases.len()
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    /// Seed of the generator that produced this map (or the map it was split from).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `a_j`.
    pub fn weight_row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// The `m × d` weight matrix.
    pub fn weights(&self) -> Mat<f64> {
        Mat::from_fn(self.hidden_count(), self.input_dim, |j, k| {
            self.weights[j * self.input_dim + k]
        })
    }

    /// Neurons `start..start + len` as a map of their own.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.hidden_count() {
            return Err(ElmError::invalid(format!(
                "neuron range {start}..{} out of bounds for {} neurons",
                start + len,
                self.hidden_count()
            )));
        }
        let d = self.input_dim;
        Ok(Self {
            input_dim: d,
            weights: self.weights[start * d..(start + len) * d].to_vec(),
            biases: self.biases[start..start + len].to_vec(),
            activation: self.activation,
            seed: self.seed,
        })
    }

    /// Concatenates maps neuron-wise (the hidden layer of the combined
    /// network). All parts must share input dimension and activation.
    pub fn concat(parts: &[RandomFeatureMap]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| ElmError::invalid("cannot concatenate zero feature maps"))?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for p in parts {
            if p.input_dim != first.input_dim || p.activation != first.activation {
                return Err(ElmError::invalid(
                    "feature maps differ in input dimension or activation",
                ));
            }
            weights.extend_from_slice(&p.weights);
            biases.extend_from_slice(&p.biases);
        }
        Ok(Self {
            input_dim: first.input_dim,
            weights,
            biases,
            activation: first.activation,
            seed: first.seed,
        })
    }
}

/// Draws a feature map with `hidden_count` neurons over `input_dim` inputs.
///
/// Weights are drawn neuron by neuron, then all biases, from a ChaCha20
/// stream seeded with `seed`; the result is bit-identical across runs.
pub fn generate_feature_map(
    input_dim: usize,
    hidden_count: usize,
    activation: ActivationKind,
    seed: u64,
) -> Result<RandomFeatureMap> {
    if input_dim == 0 || hidden_count == 0 {
        return Err(ElmError::invalid(format!(
            "feature map dimensions must be positive (input_dim = {input_dim}, hidden_count = {hidden_count})"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..input_dim * hidden_count)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let biases = (0..hidden_count)
        .map(|_| match activation {
            ActivationKind::Sigmoid => rng.random_range(-1.0..=1.0),
            // random::<f64>() is in [0, 1)
            ActivationKind::RadialBasis => 1.0 - rng.random::<f64>(),
        })
        .collect();
    Ok(RandomFeatureMap {
        input_dim,
        weights,
        biases,
        activation,
        seed,
    })
}

/// Splits `map` into consecutive neuron blocks of the given sizes.
pub fn split_feature_map(map: &RandomFeatureMap, block_sizes: &[usize]) -> Result<Vec<RandomFeatureMap>> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(ElmError::invalid("block sizes must be non-empty and positive"));
    }
    let total: usize = block_sizes.iter().sum();
    if total != map.hidden_count() {
        return Err(ElmError::invalid(format!(
            "block sizes sum to {total}, but the map has {} neurons",
            map.hidden_count()
        )));
    }
    let mut start = 0;
    block_sizes
        .iter()
        .map(|&len| {
            let part = map.slice(start, len);
            start += len;
            part
        })
        .collect()
}

/// The `n × m` matrix `H` with `H[i, j] = g(x_i; a_j, b_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix {
    values: Mat<f64>,
}

impl HiddenMatrix {
    pub fn new(values: Mat<f64>) -> Result<Self> {
        ensure_finite("hidden matrix", values.as_ref())?;
        Ok(Self { values })
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.values
    }

    pub fn sample_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn hidden_count(&self) -> usize {
        self.values.ncols()
    }

    /// Column-wise concatenation `[H₁ H₂ …]`.
    pub fn hconcat(parts: &[&HiddenMatrix]) -> Result<Self> {
        let n = parts
            .first()
            .ok_or_else(|| ElmError::invalid("cannot concatenate zero hidden matrices"))?
            .sample_count();
        if parts.iter().any(|p| p.sample_count() != n) {
            return Err(ElmError::invalid("hidden matrices differ in sample count"));
        }
        let m = parts.iter().map(|p| p.hidden_count()).sum();
        let mut values = Mat::<f64>::zeros(n, m);
        let mut col0 = 0;
        for p in parts {
            values
                .as_mut()
                .subcols_mut(col0, p.hidden_count())
                .copy_from(p.values());
            col0 += p.hidden_count();
        }
        Ok(Self { values })
    }
}

/// Target matrix `Y` (`n × c`). For classification each row is one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Mat<f64>,
}

impl LabelMatrix {
    pub fn new(values: Mat<f64>) -> Result<Self> {
        ensure_finite("label matrix", values.as_ref())?;
        Ok(Self { values })
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    pub fn sample_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.values.ncols()
    }
}

/// Output weight `W` (`m × c`), the only trained parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeight {
    values: Mat<f64>,
}

impl OutputWeight {
    pub fn new(values: Mat<f64>) -> Result<Self> {
        ensure_finite("output weight", values.as_ref())?;
        Ok(Self { values })
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.values
    }

    pub fn hidden_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.values.ncols()
    }

    /// Stacks `[W₁; W₂; …]`.
    pub fn vstack(parts: &[&OutputWeight]) -> Result<Self> {
        let c = parts
            .first()
            .ok_or_else(|| ElmError::invalid("cannot stack zero weights"))?
            .class_count();
        if parts.iter().any(|p| p.class_count() != c) {
            return Err(ElmError::invalid("output weights differ in class count"));
        }
        let m = parts.iter().map(|p| p.hidden_count()).sum();
        let mut values = Mat::<f64>::zeros(m, c);
        let mut row0 = 0;
        for p in parts {
            values
                .as_mut()
                .subrows_mut(row0, p.hidden_count())
                .copy_from(p.values());
            row0 += p.hidden_count();
        }
        Ok(Self { values })
    }
}

pub(crate) fn ensure_finite(what: &str, m: MatRef<'_, f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(ElmError::InvalidData(format!(
                    "{what} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Evaluates the hidden layer on `samples` (`d × n`, one sample per column).
///
/// Every entry is computed independently with a fixed summation order, so
/// the result does not depend on thread count, and hidden matrices of split
/// maps concatenate to the parent's hidden matrix bit for bit.
pub fn compute_hidden_matrix(map: &RandomFeatureMap, samples: MatRef<'_, f64>) -> Result<HiddenMatrix> {
    let d = map.input_dim();
    if samples.nrows() != d {
        return Err(ElmError::invalid(format!(
            "samples have {} rows but the feature map expects input_dim = {d}",
            samples.nrows()
        )));
    }
    let n = samples.ncols();
    let mut xs = Vec::with_capacity(d * n);
    for i in 0..n {
        for k in 0..d {
            let v = samples[(k, i)];
            if !v.is_finite() {
                return Err(ElmError::InvalidData(format!(
                    "sample {i} has a non-finite feature at index {k}"
                )));
            }
            xs.push(v);
        }
    }

    let m = map.hidden_count();
    let mut values = Mat::<f64>::zeros(n, m);
    let activation = map.activation();
    values
        .as_mut()
        .par_col_iter_mut()
        .enumerate()
        .for_each(|(j, mut col)| {
            let a = map.weight_row(j);
            let b = map.biases()[j];
            for i in 0..n {
                let x = &xs[i * d..(i + 1) * d];
                col[i] = activate(activation, x, a, b);
            }
        });
    Ok(HiddenMatrix { values })
}

#[inline]
pub(crate) fn activate(kind: ActivationKind, x: &[f64], a: &[f64], b: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => 1.0 / (1.0 + (dot(x, a) + b).exp()),
        ActivationKind::RadialBasis => (-b * squared_distance(x, a).sqrt()).exp(),
    }
}

const LANES: usize = 8;

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for k in 0..LANES {
            acc[k] += xs[k] * ys[k];
        }
    }
    let mut s = lane_sum(&acc);
    for (a, b) in xr.iter().zip(yr) {
        s += a * b;
    }
    s
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for k in 0..LANES {
            let t = xs[k] - ys[k];
            acc[k] += t * t;
        }
    }
    let mut s = lane_sum(&acc);
    for (a, b) in xr.iter().zip(yr) {
        let t = a - b;
        s += t * t;
    }
    s
}

#[inline]
fn lane_sum(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}
