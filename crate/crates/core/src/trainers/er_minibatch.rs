//! Stabilized mini-batch ER.
//!
//! Algorithm-2 stepping applied per mini-batch needs two changes to survive
//! small batches: every pseudo-inverse carries a positive ridge coefficient
//! (tiny batches are always rank-deficient), and each step interpolates
//! toward the newly regressed weights instead of jumping,
//! `W <- (1 - eta) W + eta W_new = W + eta dW`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::er_multilayer::er_alg2_step_scaled;
use super::{
    half_squared_error, misclassification_rate, weight_delta_norms, BatchSize, StepReport,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::MlpState;

/// One epoch of mini-batch ER: seeded shuffle, then an interpolated
/// Algorithm-2 step on each batch. The shuffle seed is `config.seed + epoch`
/// so epochs differ but reruns do not.
///
/// `eta` outside (0, 1] is rejected by [`TrainConfig::validate`]; the raw
/// epoch function additionally accepts the frozen endpoint `eta = 0`.
pub fn er_minibatch_epoch(
    state: &mut MlpState,
    x: &Matrix,
    y_hat: &Matrix,
    config: &TrainConfig,
    epoch: u64,
) -> Result<StepReport> {
    if config.alpha <= 0.0 {
        return Err(Error::config(
            "mini-batch ER requires alpha > 0: a batch narrower than the feature \
             count makes the unregularized pseudo-inverse singular",
        ));
    }
    if !(0.0..=1.0).contains(&config.eta) {
        return Err(Error::config(format!(
            "interpolation rate eta must lie in [0, 1], got {}",
            config.eta
        )));
    }
    if x.rows() != y_hat.rows() {
        return Err(Error::shape(
            "er_minibatch_epoch",
            format!("{} input rows but {} target rows", x.rows(), y_hat.rows()),
        ));
    }

    let n = x.rows();
    let batch = match config.batch_size {
        BatchSize::Full => n,
        BatchSize::Fixed(b) => {
            if b == 0 || b > n {
                return Err(Error::config(format!(
                    "batch size {b} out of range 1..={n}"
                )));
            }
            b
        }
    };

    let pre_y = state.forward_inference(x)?;
    let pre_loss = half_squared_error(&pre_y, y_hat)?;
    let pre_error = misclassification_rate(&pre_y, y_hat)?;
    drop(pre_y);
    let before: Vec<Matrix> = state.weights().to_vec();

    if batch == n {
        // Single full batch: row order is irrelevant to the regression, so
        // skip the permutation and keep results bit-identical to a plain
        // scaled step.
        er_alg2_step_scaled(state, x, y_hat, config.alpha, config.eta)?;
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx = x.select_rows(chunk)?;
            let by = y_hat.select_rows(chunk)?;
            er_alg2_step_scaled(state, &bx, &by, config.alpha, config.eta)?;
        }
    }
    // The cache now describes the last batch, not the full data.
    state.invalidate_cache();

    let post_y = state.forward_inference(x)?;
    Ok(StepReport {
        dw_norms: weight_delta_norms(&before, state.weights()),
        pre_loss,
        post_loss: half_squared_error(&post_y, y_hat)?,
        pre_error,
        post_error: misclassification_rate(&post_y, y_hat)?,
        stability_warnings: 0,
    })
}
