//! Dense matrix primitives and the numerical kernels behind every update
//! rule in this crate.
//!
//! [`Matrix`] is a row-major, double-precision 2-D array. It is the single
//! carrier type for inputs, targets, activations, pre-activations, and
//! weights. Entries are guaranteed finite: constructors reject NaN/Inf and
//! arithmetic that could overflow checks its output and errors instead of
//! propagating junk.
//!
//! The module also provides the regularized pseudo-inverse family
//! ([`ridge_pinv`], [`ridge_solve`]) and the H/tanh(H) ratio ([`Matrix::safe_ratio`])
//! that multiplicative updates are built from.

mod ridge;

pub use ridge::{ridge_pinv, ridge_solve, RANK_TOLERANCE};

use crate::error::{Error, Result};

/// Cutoff below which `safe_ratio` switches from direct evaluation of
/// h/tanh(h) to its Taylor series. At 1e-4 the first omitted term is ~1e-17,
/// below double-precision resolution.
pub const SAFE_RATIO_SERIES_CUTOFF: f64 = 1e-4;

/// Dense row-major matrix of `f64` with strictly positive dimensions and
/// all-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(
                "Matrix::new",
                format!("dimensions must be positive, got {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!(
                    "data length {} does not match {rows}x{cols} = {}",
                    data.len(),
                    rows * cols
                ),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                op: "Matrix::new".into(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Internal constructor for results that are finite by construction
    /// (e.g. tanh outputs). Shape is still the caller's responsibility.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(rows > 0 && cols > 0);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a nested row list; rows must be non-empty and equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::shape("Matrix::from_rows", "empty row list"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("Matrix::from_rows", "ragged rows".to_string()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Matrix product `self * other`.
    ///
    /// Backed by a tuned dgemm kernel; results are checked finite before
    /// being returned.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "inner dimensions differ: {}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        // Row-major strides: row stride = cols, column stride = 1.
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        ensure_finite(&out, "matmul")?;
        Ok(Matrix::from_parts(self.rows, other.cols, out))
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard")?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        ensure_finite(&data, "hadamard")?;
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        ensure_finite(&data, "add")?;
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        ensure_finite(&data, "sub")?;
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    pub fn scale(&self, factor: f64) -> Result<Matrix> {
        let data: Vec<f64> = self.data.iter().map(|v| v * factor).collect();
        ensure_finite(&data, "scale")?;
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_parts(self.cols, self.rows, out)
    }

    /// Element-wise hyperbolic tangent. Outputs are kept strictly inside
    /// (-1, 1): for |h| large enough that f64 tanh rounds to exactly 1, the
    /// value is nudged to the nearest representable number below 1, so the
    /// open-interval codomain holds at the representation level too.
    pub fn tanh_activation(&self) -> Matrix {
        let data: Vec<f64> = self.data.iter().map(|&h| tanh_strict(h)).collect();
        Matrix::from_parts(self.rows, self.cols, data)
    }

    /// Derivative of tanh evaluated element-wise: 1 - tanh(h)^2.
    pub fn tanh_derivative(&self) -> Matrix {
        let data: Vec<f64> = self
            .data
            .iter()
            .map(|&h| {
                let t = h.tanh();
                1.0 - t * t
            })
            .collect();
        Matrix::from_parts(self.rows, self.cols, data)
    }

    /// Element-wise h/tanh(h) with the 0/0 limit handled analytically.
    /// Every output entry is >= 1. Total on finite inputs: never errors.
    pub fn safe_ratio(&self) -> Matrix {
        let data: Vec<f64> = self.data.iter().map(|&h| safe_ratio_scalar(h)).collect();
        Matrix::from_parts(self.rows, self.cols, data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        if indices.is_empty() {
            return Err(Error::shape("select_rows", "empty index list"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &r in indices {
            if r >= self.rows {
                return Err(Error::shape(
                    "select_rows",
                    format!("row {r} out of range for {}x{}", self.rows, self.cols),
                ));
            }
            data.extend_from_slice(self.row(r));
        }
        Ok(Matrix::from_parts(indices.len(), self.cols, data))
    }

    /// Largest absolute element-wise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!(
                    "shapes differ: {}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(())
    }
}

/// tanh clamped to the open interval (-1, 1) at f64 granularity.
fn tanh_strict(h: f64) -> f64 {
    const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0; // largest f64 < 1.0
    let t = h.tanh();
    if t >= 1.0 {
        BELOW_ONE
    } else if t <= -1.0 {
        -BELOW_ONE
    } else {
        t
    }
}

/// Scalar h/tanh(h) with its limit 1 at h = 0.
///
/// For |h| below [`SAFE_RATIO_SERIES_CUTOFF`] the direct quotient is 0/0-ish,
/// so the series 1 + h^2/3 + 2h^4/15 is used instead. The result is >= 1 for
/// every finite h.
pub fn safe_ratio_scalar(h: f64) -> f64 {
    if h.abs() < SAFE_RATIO_SERIES_CUTOFF {
        let h2 = h * h;
        1.0 + h2 / 3.0 + 2.0 * h2 * h2 / 15.0
    } else {
        h / h.tanh()
    }
}

pub(crate) fn ensure_finite(data: &[f64], op: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op: op.into() })
    }
}
