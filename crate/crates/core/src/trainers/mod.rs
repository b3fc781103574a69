//! Learning rules.
//!
//! All trainers share the same forward model (`H_l = Z_{l-1} W_l`,
//! `Z_l = tanh(H_l)`) and differ only in how they turn the output residual
//! into weight changes:
//!
//! - [`bp_step`]: gradient descent on the half squared error, the delta rule
//!   baseline.
//! - [`er_single_step`]: single-layer expectation reflection — the residual
//!   is amplified by H/tanh(H) and weights are re-fit by regularized least
//!   squares in one shot.
//! - [`er_alg1_step`] / [`er_alg2_step`]: two orderings of the multilayer
//!   extension. The first interleaves weight updates with the backward sweep
//!   and regresses against stale activations; the second defers all updates,
//!   then refreshes each layer's input activations before regressing. The
//!   difference is internal covariate shift, and it decides whether one-step
//!   learning works at all.
//! - [`er_naive_target_step`]: propagates target values instead of
//!   differences; kept because its instability motivates the difference form.
//! - [`er_minibatch_epoch`]: Algorithm-2 stepping per mini-batch with a
//!   ridge-stabilized pseudo-inverse and convex interpolation toward the new
//!   weights.

mod bp;
mod er_minibatch;
mod er_multilayer;
mod er_single;

pub use bp::{bp_gradients, bp_step};
pub use er_minibatch::er_minibatch_epoch;
pub use er_multilayer::{
    dtp_adjustment_identity_check, er_alg1_step, er_alg2_step, er_backward, er_naive_target_step,
    ErDeltas,
};
pub use er_single::er_single_step;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{predict_classes, ForwardCache, MlpState};

/// Which update rule drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bp,
    ErSingle,
    ErAlg1,
    ErAlg2,
    ErNaiveTarget,
    ErMinibatch,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bp" => Ok(Algorithm::Bp),
            "er-single" | "er_single" => Ok(Algorithm::ErSingle),
            "er-alg1" | "er_alg1" => Ok(Algorithm::ErAlg1),
            "er-alg2" | "er_alg2" => Ok(Algorithm::ErAlg2),
            "er-naive" | "er_naive_target" => Ok(Algorithm::ErNaiveTarget),
            "er-minibatch" | "er_minibatch" => Ok(Algorithm::ErMinibatch),
            other => Err(Error::config(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn cli_name(&self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::ErSingle => "er-single",
            Algorithm::ErAlg1 => "er-alg1",
            Algorithm::ErAlg2 => "er-alg2",
            Algorithm::ErNaiveTarget => "er-naive",
            Algorithm::ErMinibatch => "er-minibatch",
        }
    }
}

/// Mini-batch size: everything at once, or fixed-size chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(BatchSize::Fixed(n as usize)),
            Raw::Word(w) if w == "full" => Ok(BatchSize::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "batch size must be a count or \"full\", got \"{w}\""
            ))),
        }
    }
}

/// Training hyperparameters, shared across all algorithms.
///
/// `alpha` is the ridge coefficient of the pseudo-inverse; `eta` is the
/// gradient-descent learning rate for `bp` and the weight-interpolation rate
/// for `er_minibatch` (other algorithms ignore it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub eta: f64,
    pub batch_size: BatchSize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainConfig {
            algorithm,
            alpha: 0.0,
            eta: 1.0,
            batch_size: BatchSize::Full,
            epochs: 1,
            seed: 0,
        }
    }

    /// Check cross-field invariants. Run before any compute.
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::config(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 || self.eta > 1.0 {
            return Err(Error::config(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if let BatchSize::Fixed(0) = self.batch_size {
            return Err(Error::config("batch size must be positive"));
        }
        match self.algorithm {
            Algorithm::ErAlg1 | Algorithm::ErAlg2 => {
                if self.batch_size != BatchSize::Full {
                    return Err(Error::config(format!(
                        "{} is a full-batch algorithm; use er-minibatch for mini-batches",
                        self.algorithm.cli_name()
                    )));
                }
            }
            Algorithm::ErMinibatch if self.alpha <= 0.0 => {
                return Err(Error::config(
                    "er-minibatch requires alpha > 0: small batches make the \
                     unregularized pseudo-inverse singular",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// What one training step did: per-layer Frobenius norms of the applied
/// weight change, loss and misclassification before/after, and a counter of
/// near-zero-activation events from the naive target rule.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub dw_norms: Vec<f64>,
    pub pre_loss: f64,
    pub post_loss: f64,
    pub pre_error: f64,
    pub post_error: f64,
    pub stability_warnings: usize,
}

/// Half squared error 0.5 * sum((y_hat - y)^2), the loss the BP baseline
/// descends.
pub fn half_squared_error(y: &Matrix, y_hat: &Matrix) -> Result<f64> {
    let d = y_hat.sub(y)?;
    Ok(0.5 * d.as_slice().iter().map(|v| v * v).sum::<f64>())
}

/// Fraction of rows whose predicted class differs from the target class.
/// Multi-column outputs are compared by argmax; single-column outputs by
/// sign (positive = class 1).
pub fn misclassification_rate(scores: &Matrix, y_hat: &Matrix) -> Result<f64> {
    if scores.shape() != y_hat.shape() {
        return Err(Error::shape(
            "misclassification_rate",
            format!(
                "scores are {}x{} but targets are {}x{}",
                scores.rows(),
                scores.cols(),
                y_hat.rows(),
                y_hat.cols()
            ),
        ));
    }
    let wrong = if scores.cols() == 1 {
        (0..scores.rows())
            .filter(|&r| (scores.get(r, 0) > 0.0) != (y_hat.get(r, 0) > 0.0))
            .count()
    } else {
        predict_classes(scores)
            .into_iter()
            .zip(predict_classes(y_hat))
            .filter(|(a, b)| a != b)
            .count()
    };
    Ok(wrong as f64 / scores.rows() as f64)
}

/// Frobenius norm of `after - before` for each layer.
pub(crate) fn weight_delta_norms(before: &[Matrix], after: &[Matrix]) -> Vec<f64> {
    before
        .iter()
        .zip(after)
        .map(|(b, a)| {
            a.sub(b)
                .map(|d| d.frobenius_norm())
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

/// Make sure the state's forward cache corresponds to `x`; rerun the forward
/// pass if it is missing or belongs to different data.
pub(crate) fn ensure_cache(state: &mut MlpState, x: &Matrix) -> Result<()> {
    let fresh = match state.cache() {
        Some(c) => c.input == *x,
        None => false,
    };
    if !fresh {
        state.forward(x)?;
    }
    Ok(())
}

/// Output Z_L from the cache. Callers must have run [`ensure_cache`].
pub(crate) fn cached_output(cache: &ForwardCache) -> &Matrix {
    cache.act.last().expect("non-empty network")
}
