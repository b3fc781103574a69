//! Synthetic desk-scale tasks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Two interleaved half-circles, the classic nonlinear two-class task.
///
/// `n` points total (must be even), optional isotropic Gaussian noise,
/// features min-max scaled into [0, 1], row order shuffled. Fully
/// deterministic for a fixed seed.
pub fn synth_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::config(format!(
            "two-moons size must be even and at least 2, got {n}"
        )));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::config(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise_term = |rng: &mut ChaCha8Rng| {
        if noise > 0.0 {
            noise * normal.sample(rng)
        } else {
            0.0
        }
    };

    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..half {
        let t = std::f64::consts::PI * i as f64 / (half - 1).max(1) as f64;
        points.push([
            t.cos() + noise_term(&mut rng),
            t.sin() + noise_term(&mut rng),
        ]);
        labels.push(0);
    }
    for i in 0..half {
        let t = std::f64::consts::PI * i as f64 / (half - 1).max(1) as f64;
        points.push([
            1.0 - t.cos() + noise_term(&mut rng),
            0.5 - t.sin() + noise_term(&mut rng),
        ]);
        labels.push(1);
    }

    // Min-max scale each feature into [0, 1].
    for f in 0..2 {
        let lo = points.iter().map(|p| p[f]).fold(f64::INFINITY, f64::min);
        let hi = points
            .iter()
            .map(|p| p[f])
            .fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for p in points.iter_mut() {
            p[f] = (p[f] - lo) / span;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let data: Vec<f64> = order.iter().flat_map(|&i| points[i]).collect();
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    Dataset::from_labels("two-moons", Matrix::new(n, 2, data)?, labels, 2)
}
