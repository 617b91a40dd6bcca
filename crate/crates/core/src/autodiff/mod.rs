//! Dense `f64` tensors with define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves created
//! with [`Tape::param`] receive gradients from [`Tape::backward`]; leaves
//! created with [`Tape::constant`] do not. The tape is single-threaded and
//! is dropped after the backward pass.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{sigmoid, softplus, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected a matrix, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("invalid axis {0}")]
    Axis(usize),
    #[error("{op}: index {index} out of range for length {len}")]
    Index { op: &'static str, index: usize, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),
    #[error("gradient check invalid: {0}")]
    CheckInvalid(String),
}
