//! Minimal differentiable building blocks.
//!
//! Every layer works on a single example at a time: `forward` returns the
//! activations together with whatever the matching `backward` needs, and
//! `backward` accumulates parameter gradients into [`Parameter::grad`]
//! while returning the gradient with respect to its input.

mod adam;
mod dense;
mod dropout;
mod gradcheck;
mod lstm;
mod pool;
mod rng;
mod softmax;
mod tensor;

pub use adam::{adam_step, Adam};
pub use dense::{dense_backward, dense_forward, Activation, Dense};
pub use dropout::{dropout, DropoutMask, Mode};
pub use gradcheck::{grad_check, GradCheck, DEFAULT_GRAD_CHECK_STEP, MAX_COORDS_PER_PARAM};
pub use lstm::{BiLstm, BiLstmCache, LstmCell, LstmDirectionCache};
pub use pool::{mean_max_pool, mean_max_pool_backward, PoolCache};
pub use rng::Rng;
pub use softmax::{cross_entropy_grad, softmax, softmax_cross_entropy};
pub use tensor::{Parameter, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite value in {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(NnError::Dimension {
            expected: format!("{what} of length {expected}"),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
