//! Expectation Reflection (ER) training for dense feed-forward networks.
//!
//! ER replaces gradient descent's additive, learning-rate-scaled weight
//! updates with a multiplicative rule: pre-activations are rescaled by the
//! ratio of observed to predicted output, and weights are then re-fit by
//! regularized least squares. On full batches a single update suffices to
//! reach near-final accuracy on image classification tasks.
//!
//! The crate is organized around five modules:
//!
//! - [`linalg`]: the dense [`Matrix`](linalg::Matrix) carrier type, the
//!   regularized pseudo-inverse family, and the safe H/tanh(H) ratio.
//! - [`network`]: multilayer perceptron state, forward propagation, argmax
//!   prediction, checkpointing.
//! - [`trainers`]: the learning rules — a backpropagation baseline,
//!   single-layer ER, two multilayer ER orderings, a naive target-value
//!   variant, and stabilized mini-batch ER.
//! - [`data`]: MNIST IDX and CIFAR-10 binary parsing, +/-1 target encoding,
//!   synthetic task generators, stratified subsetting.
//! - [`harness`]: experiment runner producing per-epoch CSV/JSON metrics.

pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod trainers;

pub use error::{Error, Result};
pub use linalg::Matrix;
