//! Datasets: loaders, label encoding, scaling and synthetic generation.

mod idx;
mod table;

pub use idx::{load_idx, read_idx_header, IdxHeader, IMAGE_MAGIC, LABEL_MAGIC};
pub use table::{load_csv, load_csv_pair, write_csv, LabelColumn};

use std::fmt;

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::model::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Samples as columns of a `d × n` feature matrix, with integer class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Mat<f64>,
    labels: Vec<usize>,
    class_count: usize,
    name: String,
    split: Split,
}

impl Dataset {
    pub fn new(features: Mat<f64>, labels: Vec<usize>, class_count: usize, name: impl Into<String>, split: Split) -> Result<Self> {
        let n = features.ncols();
        if n == 0 || features.nrows() == 0 {
            return Err(ElmError::InvalidData("dataset has no samples or no features".into()));
        }
        if labels.len() != n {
            return Err(ElmError::InvalidData(format!("{n} samples but {} labels", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(ElmError::InvalidData(format!("label {bad} outside 0..{class_count}")));
        }
        for j in 0..n {
            for i in 0..features.nrows() {
                if !features[(i, j)].is_finite() {
                    return Err(ElmError::InvalidData(format!("non-finite feature {i} of sample {j}")));
                }
            }
        }
        Ok(Self { features, labels, class_count, name: name.into(), split })
    }

    /// `d × n`.
    pub fn features(&self) -> MatRef<'_, f64> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sample_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// The first `n` samples, keeping the class count.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.sample_count() {
            return Err(ElmError::invalid(format!("cannot take {n} of {} samples", self.sample_count())));
        }
        Ok(Self {
            features: self.features.subcols(0, n).to_owned(),
            labels: self.labels[..n].to_vec(),
            class_count: self.class_count,
            name: self.name.clone(),
            split: self.split,
        })
    }

    pub fn one_hot(&self) -> LabelMatrix {
        one_hot(&self.labels, self.class_count).expect("labels validated on construction")
    }
}

/// Class indicator matrix: row `k` has a 1 in column `labels[k]`.
pub fn one_hot(labels: &[usize], class_count: usize) -> Result<LabelMatrix> {
    if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(ElmError::invalid(format!("label {bad} outside 0..{class_count}")));
    }
    LabelMatrix::new(Mat::from_fn(labels.len(), class_count, |i, j| f64::from(labels[i] == j)))
}

/// Per-feature affine map onto `[0, 1]` fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset) -> Self {
        let x = data.features();
        let (min, max) = (0..x.nrows())
            .map(|i| {
                (0..x.ncols()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), j| {
                    (lo.min(x[(i, j)]), hi.max(x[(i, j)]))
                })
            })
            .unzip();
        Self { min, max }
    }

    /// Constant features map to 0; values outside the fitted range are
    /// clamped.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.input_dim() != self.min.len() {
            return Err(ElmError::invalid(format!(
                "scaler fitted on {} features, dataset has {}",
                self.min.len(),
                data.input_dim()
            )));
        }
        let x = data.features();
        let features = Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
            let range = self.max[i] - self.min[i];
            if range > 0.0 {
                ((x[(i, j)] - self.min[i]) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        });
        Ok(Dataset { features, ..data.clone() })
    }
}

/// Scales a dataset with its own min/max.
pub fn normalize_minmax(data: &Dataset) -> Dataset {
    MinMaxScaler::fit(data).transform(data).expect("same dimension")
}

/// Scales a train/test pair with the train statistics.
pub fn normalize_pair(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let scaler = MinMaxScaler::fit(train);
    Ok((scaler.transform(train)?, scaler.transform(test)?))
}

/// Gaussian clusters around unit-hypercube corners. Sample `i` has class
/// `i mod c`, and class `k` sits on the corner whose coordinates are the
/// binary digits of `k` (cycling when `c > 2^d`).
pub fn synthetic_blobs(seed: u64, n: usize, d: usize, class_count: usize, spread: f64) -> Result<Dataset> {
    if class_count == 0 || n < class_count || d == 0 {
        return Err(ElmError::invalid(format!(
            "need n >= class_count >= 1 and d >= 1 (n = {n}, d = {d}, class_count = {class_count})"
        )));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(ElmError::invalid(format!("spread must be finite and non-negative, got {spread}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let corner = |k: usize, i: usize| if i < usize::BITS as usize { ((k >> i) & 1) as f64 } else { 0.0 };
    let labels: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    let mut features = Mat::<f64>::zeros(d, n);
    for (j, &k) in labels.iter().enumerate() {
        for i in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[(i, j)] = corner(k, i) + spread * z;
        }
    }
    Dataset::new(features, labels, class_count, "blobs", Split::Train)
}
