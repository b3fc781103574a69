//! Datasets: binary parsers, +/-1 target encoding, and synthetic tasks.
//!
//! A [`Dataset`] pairs an input matrix (features scaled to [0, 1]) with a
//! target matrix in which each row has exactly one +1 entry and -1
//! everywhere else, plus the integer class labels. The constructor enforces
//! those invariants, so every loader and generator funnels through it.

mod cifar;
mod mnist;
mod synth;

pub use cifar::load_cifar10;
pub use mnist::load_mnist;
pub use synth::synth_two_moons;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::predict_classes;

/// Input/target pair for classification.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    x: Matrix,
    y_hat: Matrix,
    labels: Vec<usize>,
}

impl Dataset {
    /// Build a dataset from features and integer labels. Validates that
    /// features lie in [0, 1], labels are in range, and shapes agree.
    pub fn from_labels(
        name: impl Into<String>,
        x: Matrix,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape(
                "Dataset::from_labels",
                format!("{} feature rows but {} labels", x.rows(), labels.len()),
            ));
        }
        if x.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::config("dataset features must be scaled into [0, 1]"));
        }
        let y_hat = encode_labels(&labels, n_classes)?;
        Ok(Dataset {
            name: name.into(),
            x,
            y_hat,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    /// Targets in one-hot +/-1 encoding, one column per class.
    pub fn y_hat(&self) -> &Matrix {
        &self.y_hat
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // a Dataset always has at least one row by Matrix invariant
    }

    pub fn n_classes(&self) -> usize {
        self.y_hat.cols()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Single-column +/-1 targets for two-class tasks (class 0 -> -1,
    /// class 1 -> +1), the natural encoding for a one-output network.
    pub fn binary_targets(&self) -> Result<Matrix> {
        if self.n_classes() != 2 {
            return Err(Error::config(format!(
                "binary targets need exactly 2 classes, dataset has {}",
                self.n_classes()
            )));
        }
        let data: Vec<f64> = self
            .labels
            .iter()
            .map(|&l| if l == 1 { 1.0 } else { -1.0 })
            .collect();
        Matrix::new(self.len(), 1, data)
    }

    /// Copy of the dataset with a constant 1.0 column appended to the
    /// features (the optional bias-like input augmentation).
    pub fn augment_ones(&self) -> Result<Dataset> {
        let (n, p) = self.x.shape();
        let mut data = Vec::with_capacity(n * (p + 1));
        for r in 0..n {
            data.extend_from_slice(self.x.row(r));
            data.push(1.0);
        }
        Ok(Dataset {
            name: self.name.clone(),
            x: Matrix::new(n, p + 1, data)?,
            y_hat: self.y_hat.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Rows of the dataset at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::shape("Dataset::select", format!("row {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            name: self.name.clone(),
            x: self.x.select_rows(indices)?,
            y_hat: self.y_hat.select_rows(indices)?,
            labels,
        })
    }
}

/// One-hot +/-1 encoding: row i has +1 at column labels[i], -1 elsewhere.
pub fn encode_labels(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    if n_classes == 0 || labels.is_empty() {
        return Err(Error::config("need at least one class and one label"));
    }
    let mut data = vec![-1.0; labels.len() * n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::config(format!(
                "label {l} out of range for {n_classes} classes"
            )));
        }
        data[i * n_classes + l] = 1.0;
    }
    Matrix::new(labels.len(), n_classes, data)
}

/// Inverse of [`encode_labels`]: per-row argmax.
pub fn decode_labels(y_hat: &Matrix) -> Vec<usize> {
    predict_classes(y_hat)
}

/// Seeded, class-stratified sample of n rows. Class proportions are
/// preserved up to rounding (largest-remainder allocation); the result's row
/// order is shuffled.
pub fn subset(d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > d.len() {
        return Err(Error::config(format!(
            "subset size {n} out of range 1..={}",
            d.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (i, &l) in d.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    // Largest-remainder quotas so per-class counts are off by at most one.
    let total = d.len() as f64;
    let mut quotas: Vec<(usize, f64)> = by_class
        .iter()
        .map(|idx| {
            let exact = n as f64 * idx.len() as f64 / total;
            (exact.floor() as usize, exact.fract())
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
    let mut cursor = 0;
    while assigned < n {
        let c = order[cursor % order.len()];
        if quotas[c].0 < by_class[c].len() {
            quotas[c].0 += 1;
            assigned += 1;
        }
        cursor += 1;
    }

    let mut picked = Vec::with_capacity(n);
    for (c, idx) in by_class.iter().enumerate() {
        let mut pool = idx.clone();
        pool.shuffle(&mut rng);
        picked.extend_from_slice(&pool[..quotas[c].0.min(pool.len())]);
    }
    picked.shuffle(&mut rng);
    d.select(&picked)
}
