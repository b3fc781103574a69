//! Single-layer expectation reflection.
//!
//! The residual dY = y_hat - Y is amplified through the inverse-slope ratio
//! H/tanh(H), and the weight change is solved by regularized least squares:
//! dW = pinv(X) dH, W += dW. No learning rate exists; on full-rank data one
//! step lands the regression on the target pre-activations exactly.

use super::{
    cached_output, ensure_cache, half_squared_error, misclassification_rate, weight_delta_norms,
    StepReport,
};
use crate::error::{Error, Result};
use crate::linalg::{ridge_solve, Matrix};
use crate::network::MlpState;

pub fn er_single_step(
    state: &mut MlpState,
    x: &Matrix,
    y_hat: &Matrix,
    alpha: f64,
) -> Result<StepReport> {
    if state.depth() != 1 {
        return Err(Error::config(format!(
            "er-single applies to single-layer networks, this one has {} layers",
            state.depth()
        )));
    }
    ensure_cache(state, x)?;
    let cache = state.cache().expect("cache ensured");
    let y = cached_output(cache);
    if y.shape() != y_hat.shape() {
        return Err(Error::shape(
            "er_single_step",
            format!(
                "network output is {}x{} but targets are {}x{}",
                y.rows(),
                y.cols(),
                y_hat.rows(),
                y_hat.cols()
            ),
        ));
    }
    let pre_loss = half_squared_error(y, y_hat)?;
    let pre_error = misclassification_rate(y, y_hat)?;

    let delta_y = y_hat.sub(y)?;
    let delta_h = cache.pre[0].safe_ratio().hadamard(&delta_y)?;
    let delta_w = ridge_solve(x, alpha, &delta_h)?;

    let before = vec![state.weight(0).clone()];
    let updated = state.weight(0).add(&delta_w)?;
    state.set_weight(0, updated);

    let post_y = state.forward(x)?;
    Ok(StepReport {
        dw_norms: weight_delta_norms(&before, state.weights()),
        pre_loss,
        post_loss: half_squared_error(&post_y, y_hat)?,
        pre_error,
        post_error: misclassification_rate(&post_y, y_hat)?,
        stability_warnings: 0,
    })
}
