//! The regularized pseudo-inverse family: (X^T X + alpha I)^{-1} X^T.
//!
//! alpha = 0 recovers the Moore-Penrose pseudo-inverse on full-column-rank
//! inputs; large alpha approaches X^T / alpha. Neither endpoint is computed
//! by inverting the normal matrix: the alpha = 0 path goes through a QR
//! factorization of X followed by an SVD of its (small) triangular factor
//! for exact rank detection, and the alpha > 0 path QR-factorizes the
//! regularized stacked system [X; sqrt(alpha) I]. For wide inputs with
//! alpha > 0 the equivalent dual form X^T (X X^T + alpha I)^{-1} is used:
//! there the Gram matrix is small and, thanks to the ridge term, safely
//! positive definite for Cholesky.

use nalgebra::{Cholesky, DMatrix};

use super::{ensure_finite, Matrix};
use crate::error::{Error, Result};

/// Relative rank-detection tolerance for alpha = 0: the input counts as
/// rank-deficient when its smallest singular value falls below
/// `RANK_TOLERANCE` times its largest.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Regularized pseudo-inverse (X^T X + alpha I)^{-1} X^T, shape (cols x rows).
///
/// With alpha = 0 the input must have full column rank; rank deficiency is
/// detected from the singular values and reported as a singularity error
/// suggesting a positive alpha.
pub fn ridge_pinv(x: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        PinvFactors::new(x, "ridge_pinv")?.pinv()
    } else if x.rows() >= x.cols() {
        let r = augmented_r(x, alpha);
        let xt = to_dmatrix(&x.transpose());
        let m = solve_rtr(&r, &xt, "ridge_pinv")?;
        from_dmatrix(&m, "ridge_pinv")
    } else {
        // Dual form for wide X.
        let g = row_gram_plus_alpha(x, alpha)?;
        let chol = Cholesky::new(g).ok_or_else(|| unexpected_singular("ridge_pinv"))?;
        let ginv = from_dmatrix(&chol.inverse(), "ridge_pinv")?;
        x.transpose().matmul(&ginv)
    }
}

/// `ridge_pinv(x, alpha) * b` computed through the factorization without
/// materializing the pseudo-inverse. Used on tall activation matrices where
/// the explicit (cols x rows) pseudo-inverse would dwarf the actual product.
pub fn ridge_solve(x: &Matrix, alpha: f64, b: &Matrix) -> Result<Matrix> {
    check_alpha(alpha)?;
    if x.rows() != b.rows() {
        return Err(Error::shape(
            "ridge_solve",
            format!(
                "x is {}x{} but rhs is {}x{}",
                x.rows(),
                x.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    if alpha == 0.0 {
        PinvFactors::new(x, "ridge_solve")?.apply(b)
    } else if x.rows() >= x.cols() {
        let r = augmented_r(x, alpha);
        let rhs = to_dmatrix(&x.transpose().matmul(b)?);
        let m = solve_rtr(&r, &rhs, "ridge_solve")?;
        from_dmatrix(&m, "ridge_solve")
    } else {
        let g = row_gram_plus_alpha(x, alpha)?;
        let chol = Cholesky::new(g).ok_or_else(|| unexpected_singular("ridge_solve"))?;
        let s = from_dmatrix(&chol.solve(&to_dmatrix(b)), "ridge_solve")?;
        x.transpose().matmul(&s)
    }
}

/// QR + SVD factors of X for the alpha = 0 (Moore-Penrose) path.
///
/// X = Q R with thin Q, then R = U S V^T. The singular values of R are the
/// singular values of X, so rank detection happens on the small triangular
/// factor. X^+ = V S^{-1} U^T Q^T.
struct PinvFactors {
    q: DMatrix<f64>,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    sigma_inv: Vec<f64>,
}

impl PinvFactors {
    fn new(x: &Matrix, context: &str) -> Result<Self> {
        if x.rows() < x.cols() {
            return Err(Error::Singular {
                context: format!(
                    "{context}: {}x{} input has more columns than rows, so alpha = 0 cannot have full column rank",
                    x.rows(),
                    x.cols()
                ),
                tol: RANK_TOLERANCE,
            });
        }
        let (q, r) = to_dmatrix(x).qr().unpack();
        let svd = r.svd(true, true);
        let sigma = &svd.singular_values;
        let smax = sigma.iter().cloned().fold(0.0, f64::max);
        let smin = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        if smax == 0.0 || smin < RANK_TOLERANCE * smax {
            return Err(Error::Singular {
                context: format!(
                    "{context}: smallest singular value {smin:.3e} below {RANK_TOLERANCE:.0e} x largest {smax:.3e}"
                ),
                tol: RANK_TOLERANCE,
            });
        }
        Ok(PinvFactors {
            q,
            u: svd.u.expect("u requested"),
            v_t: svd.v_t.expect("v_t requested"),
            sigma_inv: sigma.iter().map(|s| 1.0 / s).collect(),
        })
    }

    fn pinv(&self) -> Result<Matrix> {
        let mut ut_qt = self.u.transpose() * self.q.transpose();
        scale_rows(&mut ut_qt, &self.sigma_inv);
        let m = self.v_t.transpose() * ut_qt;
        from_dmatrix(&m, "ridge_pinv")
    }

    fn apply(&self, b: &Matrix) -> Result<Matrix> {
        let qt_b = self.q.transpose() * to_dmatrix(b);
        let mut ut_qt_b = self.u.transpose() * qt_b;
        scale_rows(&mut ut_qt_b, &self.sigma_inv);
        let m = self.v_t.transpose() * ut_qt_b;
        from_dmatrix(&m, "ridge_solve")
    }
}

/// Upper-triangular factor R from the QR of the stacked system
/// [X; sqrt(alpha) I]. Satisfies R^T R = X^T X + alpha I without the normal
/// matrix ever being formed.
fn augmented_r(x: &Matrix, alpha: f64) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut a = DMatrix::zeros(n + p, p);
    for r in 0..n {
        for c in 0..p {
            a[(r, c)] = x.get(r, c);
        }
    }
    let root = alpha.sqrt();
    for c in 0..p {
        a[(n + c, c)] = root;
    }
    a.qr().unpack_r()
}

/// Solve (R^T R) M = B by two triangular solves.
fn solve_rtr(r: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let y = r
        .tr_solve_upper_triangular(b)
        .ok_or_else(|| unexpected_singular(context))?;
    r.solve_upper_triangular(&y)
        .ok_or_else(|| unexpected_singular(context))
}

/// X X^T + alpha I as a nalgebra matrix (wide-input dual path).
fn row_gram_plus_alpha(x: &Matrix, alpha: f64) -> Result<DMatrix<f64>> {
    let g = x.matmul(&x.transpose())?;
    let n = g.rows();
    let mut dm = to_dmatrix(&g);
    for i in 0..n {
        dm[(i, i)] += alpha;
    }
    Ok(dm)
}

fn scale_rows(m: &mut DMatrix<f64>, factors: &[f64]) {
    for (i, f) in factors.iter().enumerate() {
        for j in 0..m.ncols() {
            m[(i, j)] *= f;
        }
    }
}

fn unexpected_singular(context: &str) -> Error {
    Error::Singular {
        context: format!("{context}: regularized system unexpectedly singular"),
        tol: RANK_TOLERANCE,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::config(format!(
            "ridge coefficient alpha must be finite and non-negative, got {alpha}"
        )));
    }
    Ok(())
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_dmatrix(m: &DMatrix<f64>, op: &str) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = m[(r, c)];
        }
    }
    ensure_finite(&data, op)?;
    Ok(Matrix::from_parts(rows, cols, data))
}
