//! Multilayer expectation reflection.
//!
//! The backward process mirrors backpropagation with two substitutions: the
//! activation slope tanh'(H) becomes the inverse-slope ratio H/tanh(H), and
//! transposed weights become (ridge) pseudo-inverses:
//!
//! ```text
//! dZ_L     = y_hat - Z_L
//! dH_l     = (H_l / Z_l) (.) dZ_l          (ratio evaluated as safe_ratio(H_l))
//! dZ_{l-1} = dH_l W_l^+                    (l = L .. 2)
//! dW_l     = Z_{l-1}^+ dH_l
//! W_l     += dW_l
//! ```
//!
//! The two step functions differ in which `Z_{l-1}` feeds the regression:
//! [`er_alg1_step`] uses the activations of the original forward pass, even
//! though lower layers have already changed under it; [`er_alg2_step`] first
//! finishes the whole backward sweep, then walks forward, refreshing each
//! layer's input activations before solving for its weights. That single
//! ordering change is what absorbs internal covariate shift.

use super::{
    cached_output, ensure_cache, half_squared_error, misclassification_rate, weight_delta_norms,
    StepReport,
};
use crate::error::{Error, Result};
use crate::linalg::{ridge_pinv, ridge_solve, Matrix};
use crate::network::{ForwardCache, MlpState};

/// Near-zero threshold for activations in the naive target rule: entries of
/// |Z| below this with a non-trivial target are counted as stability events.
const NAIVE_CLAMP: f64 = 1e-8;

/// Per-layer changes produced by the ER backward process.
///
/// `delta_h[l]` and `delta_z[l]` describe layer `l+1` in 1-based terms, so
/// `delta_z.last()` is the output residual `y_hat - Z_L` and `delta_h[0]` is
/// the first layer's pre-activation change.
#[derive(Debug, Clone)]
pub struct ErDeltas {
    pub delta_h: Vec<Matrix>,
    pub delta_z: Vec<Matrix>,
}

/// ER backward process on the cached forward pass, with old weights.
/// Requires a valid cache (run `forward` first).
pub fn er_backward(state: &MlpState, y_hat: &Matrix, alpha: f64) -> Result<ErDeltas> {
    let cache = state
        .cache()
        .ok_or_else(|| Error::config("er_backward needs a forward cache; call forward(x) first"))?;
    let (delta_h, delta_z) = backward_from_parts(
        cache.pre.clone(),
        cached_output(cache),
        state.weights(),
        y_hat,
        alpha,
        true,
    )?;
    Ok(ErDeltas {
        delta_h,
        delta_z: delta_z.expect("requested"),
    })
}

/// Shared backward recurrence. Consumes the pre-activations so large buffers
/// are released as the sweep descends. `keep_delta_z` controls whether the
/// per-layer activation changes are retained.
fn backward_from_parts(
    pre: Vec<Matrix>,
    z_last: &Matrix,
    weights: &[Matrix],
    y_hat: &Matrix,
    alpha: f64,
    keep_delta_z: bool,
) -> Result<(Vec<Matrix>, Option<Vec<Matrix>>)> {
    let depth = weights.len();
    debug_assert_eq!(pre.len(), depth);
    if y_hat.shape() != z_last.shape() {
        return Err(Error::shape(
            "er_backward",
            format!(
                "network output is {}x{} but targets are {}x{}",
                z_last.rows(),
                z_last.cols(),
                y_hat.rows(),
                y_hat.cols()
            ),
        ));
    }

    let mut pre: Vec<Option<Matrix>> = pre.into_iter().map(Some).collect();
    let mut delta_h: Vec<Option<Matrix>> = (0..depth).map(|_| None).collect();
    let mut kept: Vec<Matrix> = Vec::new();

    let mut delta_z = y_hat.sub(z_last)?;
    for l in (1..depth).rev() {
        if keep_delta_z {
            kept.push(delta_z.clone());
        }
        let h = pre[l].take().expect("visited once");
        let dh = h.safe_ratio().hadamard(&delta_z)?;
        drop(h);
        let w_pinv = layer_pinv(&weights[l], alpha, l)?;
        delta_z = dh.matmul(&w_pinv)?;
        delta_h[l] = Some(dh);
    }
    if keep_delta_z {
        kept.push(delta_z.clone());
    }
    let h1 = pre[0].take().expect("visited once");
    delta_h[0] = Some(h1.safe_ratio().hadamard(&delta_z)?);

    kept.reverse();
    Ok((
        delta_h.into_iter().map(|d| d.expect("filled")).collect(),
        keep_delta_z.then_some(kept),
    ))
}

fn layer_pinv(w: &Matrix, alpha: f64, layer_index: usize) -> Result<Matrix> {
    ridge_pinv(w, alpha).map_err(|e| match e {
        Error::Singular { context, tol } => Error::Singular {
            context: format!("layer {} weight matrix: {context}", layer_index + 1),
            tol,
        },
        other => other,
    })
}

fn layer_solve(z_prev: &Matrix, alpha: f64, rhs: &Matrix, layer_index: usize) -> Result<Matrix> {
    ridge_solve(z_prev, alpha, rhs).map_err(|e| match e {
        Error::Singular { context, tol } => Error::Singular {
            context: format!("layer {} input activations: {context}", layer_index + 1),
            tol,
        },
        other => other,
    })
}

/// One full-batch multilayer ER step with interleaved updates and stale
/// regression inputs (the ordering that suffers internal covariate shift).
pub fn er_alg1_step(
    state: &mut MlpState,
    x: &Matrix,
    y_hat: &Matrix,
    alpha: f64,
) -> Result<StepReport> {
    ensure_cache(state, x)?;
    let cache = state.cache().expect("cache ensured");
    let pre_y = cached_output(cache).clone();
    let pre_loss = half_squared_error(&pre_y, y_hat)?;
    let pre_error = misclassification_rate(&pre_y, y_hat)?;
    drop(pre_y);

    let ForwardCache { input, pre, act } = state.take_cache().expect("cache ensured");
    drop(input);
    let z_last = act.last().expect("non-empty").clone();
    // The interleaved listing computes each dZ_{l-1} from W_l before W_l is
    // itself updated, so the deltas equal a plain backward sweep with the
    // old weights; only the regressions below see the difference.
    let (mut delta_h, _) = backward_from_parts(pre, &z_last, state.weights(), y_hat, alpha, false)?;
    drop(z_last);

    let mut dw_norms = vec![0.0; state.depth()];
    for l in (0..state.depth()).rev() {
        let dh = delta_h[l].clone();
        delta_h[l] = Matrix::zeros(1, 1); // release the real buffer
        let z_prev = if l == 0 { x } else { &act[l - 1] };
        let dw = layer_solve(z_prev, alpha, &dh, l)?;
        dw_norms[l] = dw.frobenius_norm();
        let updated = state.weight(l).add(&dw)?;
        state.set_weight(l, updated);
    }
    drop(act);

    let post_y = state.forward(x)?;
    Ok(StepReport {
        dw_norms,
        pre_loss,
        post_loss: half_squared_error(&post_y, y_hat)?,
        pre_error,
        post_error: misclassification_rate(&post_y, y_hat)?,
        stability_warnings: 0,
    })
}

/// One full-batch multilayer ER step in the covariate-shift-aware ordering:
/// backward sweep first, then per-layer regression against freshly
/// recomputed input activations, updating and re-propagating layer by layer.
pub fn er_alg2_step(
    state: &mut MlpState,
    x: &Matrix,
    y_hat: &Matrix,
    alpha: f64,
) -> Result<StepReport> {
    er_alg2_step_scaled(state, x, y_hat, alpha, 1.0)
}

/// Algorithm-2 step with the weight change scaled by `eta` before being
/// applied: `W += eta * dW`. `eta = 1` is the plain step; mini-batch
/// training interpolates with `eta < 1`.
pub(crate) fn er_alg2_step_scaled(
    state: &mut MlpState,
    x: &Matrix,
    y_hat: &Matrix,
    alpha: f64,
    eta: f64,
) -> Result<StepReport> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::config(format!(
            "interpolation rate must lie in [0, 1], got {eta}"
        )));
    }
    // Phase 1: forward (reused if the cache already belongs to x).
    ensure_cache(state, x)?;
    let cache_ref = state.cache().expect("cache ensured");
    let pre_y = cached_output(cache_ref).clone();
    let pre_loss = half_squared_error(&pre_y, y_hat)?;
    let pre_error = misclassification_rate(&pre_y, y_hat)?;
    drop(pre_y);

    // Phase 2: full backward sweep with old weights.
    let ForwardCache {
        input,
        pre,
        mut act,
    } = state.take_cache().expect("cache ensured");
    drop(input);
    let z_last = act.pop().expect("non-empty");
    drop(act); // stale hidden activations are never used again
    let (delta_h, _) = backward_from_parts(pre, &z_last, state.weights(), y_hat, alpha, false)?;
    drop(z_last);
    let mut delta_h: Vec<Option<Matrix>> = delta_h.into_iter().map(Some).collect();

    // Phase 3: update each layer against recomputed activations, lowest
    // first, re-propagating through the already-updated stack.
    let depth = state.depth();
    let mut new_pre: Vec<Matrix> = Vec::with_capacity(depth);
    let mut new_act: Vec<Matrix> = Vec::with_capacity(depth);
    let mut dw_norms = vec![0.0; depth];
    for l in 0..depth {
        let dh = delta_h[l].take().expect("visited once");
        let z_prev = if l == 0 { x } else { &new_act[l - 1] };
        let dw = layer_solve(z_prev, alpha, &dh, l)?;
        drop(dh);
        let applied = dw.scale(eta)?;
        drop(dw);
        dw_norms[l] = applied.frobenius_norm();
        let updated = state.weight(l).add(&applied)?;
        drop(applied);
        state.set_weight(l, updated);
        let h = z_prev.matmul(state.weight(l))?;
        let z = h.tanh_activation();
        new_pre.push(h);
        new_act.push(z);
    }

    let post_y = new_act.last().expect("non-empty").clone();
    state.set_cache(ForwardCache {
        input: x.clone(),
        pre: new_pre,
        act: new_act,
    });
    Ok(StepReport {
        dw_norms,
        pre_loss,
        post_loss: half_squared_error(&post_y, y_hat)?,
        pre_error,
        post_error: misclassification_rate(&post_y, y_hat)?,
        stability_warnings: 0,
    })
}

/// Target-value propagation: instead of differences, the raw targets
/// Z^new, H^new are pushed backward and weights are replaced by the
/// regression `W_l = Z_{l-1}^+ H_l^new` against stale activations.
///
/// Kept as a working baseline for its documented weakness: regression error
/// compounds across layers and there is no adjustment term to cancel it.
pub fn er_naive_target_step(
    state: &mut MlpState,
    x: &Matrix,
    y_hat: &Matrix,
    alpha: f64,
) -> Result<StepReport> {
    ensure_cache(state, x)?;
    let cache = state.cache().expect("cache ensured");
    let pre_y = cached_output(cache).clone();
    if pre_y.shape() != y_hat.shape() {
        return Err(Error::shape(
            "er_naive_target_step",
            format!(
                "network output is {}x{} but targets are {}x{}",
                pre_y.rows(),
                pre_y.cols(),
                y_hat.rows(),
                y_hat.cols()
            ),
        ));
    }
    let pre_loss = half_squared_error(&pre_y, y_hat)?;
    let pre_error = misclassification_rate(&pre_y, y_hat)?;
    drop(pre_y);

    let ForwardCache { input, pre, act } = state.take_cache().expect("cache ensured");
    drop(input);
    let depth = state.depth();

    // Backward target propagation. The H/Z ratio is evaluated as
    // safe_ratio(H), which is what the literal division H/Z would give with
    // the 0/0 limit taken; near-zero activations matched with non-zero
    // targets are counted as stability events because the literal form
    // would have amplified them unboundedly.
    let mut stability_warnings = 0usize;
    let mut h_new: Vec<Option<Matrix>> = (0..depth).map(|_| None).collect();
    let mut z_new = y_hat.clone();
    for l in (0..depth).rev() {
        stability_warnings += act[l]
            .as_slice()
            .iter()
            .zip(z_new.as_slice())
            .filter(|(z, t)| z.abs() < NAIVE_CLAMP && t.abs() > NAIVE_CLAMP)
            .count();
        let hn = pre[l].safe_ratio().hadamard(&z_new)?;
        if l > 0 {
            let w_pinv = layer_pinv(state.weight(l), alpha, l)?;
            z_new = hn.matmul(&w_pinv)?;
        }
        h_new[l] = Some(hn);
    }
    drop(pre);

    // Weight replacement against the original (stale) activations.
    let before: Vec<Matrix> = state.weights().to_vec();
    for l in 0..depth {
        let hn = h_new[l].take().expect("filled");
        let z_prev = if l == 0 { x } else { &act[l - 1] };
        let w_new = layer_solve(z_prev, alpha, &hn, l)?;
        state.set_weight(l, w_new);
    }
    drop(act);

    let post_y = state.forward(x)?;
    Ok(StepReport {
        dw_norms: weight_delta_norms(&before, state.weights()),
        pre_loss,
        post_loss: half_squared_error(&post_y, y_hat)?,
        pre_error,
        post_error: misclassification_rate(&post_y, y_hat)?,
        stability_warnings,
    })
}

/// Verify that the difference form of the backward process is exactly the
/// target form with an inverse-error adjustment term, layer by layer:
///
/// ```text
/// Z^new_{l-1} = H^new_l W_l^+ - (H_l W_l^+ - Z_{l-1})   =>  Z^new - Z = dH W^+
/// W^new_l     = Z_{l-1}^+ H^new_l - (Z_{l-1}^+ H_l - W_l) => W^new - W = Z^+ dH
/// ```
///
/// Returns true when every layer satisfies both identities to 1e-10.
/// Diagnostic-grade: materializes activation pseudo-inverses, so intended
/// for small networks.
pub fn dtp_adjustment_identity_check(state: &MlpState, y_hat: &Matrix, alpha: f64) -> Result<bool> {
    let cache = state.cache().ok_or_else(|| {
        Error::config("dtp_adjustment_identity_check needs a forward cache; call forward(x) first")
    })?;
    let deltas = er_backward(state, y_hat, alpha)?;
    let depth = state.depth();
    const TOL: f64 = 1e-10;

    for l in 0..depth {
        let h = &cache.pre[l];
        let h_new = h.add(&deltas.delta_h[l])?;
        let z_prev = if l == 0 {
            &cache.input
        } else {
            &cache.act[l - 1]
        };

        // Weight-side identity.
        let z_pinv = ridge_pinv(z_prev, alpha)?;
        let adjusted_w = z_pinv
            .matmul(&h_new)?
            .sub(&z_pinv.matmul(h)?.sub(state.weight(l))?)?;
        let direct_w = state.weight(l).add(&z_pinv.matmul(&deltas.delta_h[l])?)?;
        if adjusted_w.max_abs_diff(&direct_w)? > TOL {
            return Ok(false);
        }

        // Activation-side identity (layers with a predecessor activation).
        if l > 0 {
            let w_pinv = ridge_pinv(state.weight(l), alpha)?;
            let adjusted_z = h_new
                .matmul(&w_pinv)?
                .sub(&h.matmul(&w_pinv)?.sub(z_prev)?)?;
            let direct_z = z_prev.add(&deltas.delta_h[l].matmul(&w_pinv)?)?;
            if adjusted_z.max_abs_diff(&direct_z)? > TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
