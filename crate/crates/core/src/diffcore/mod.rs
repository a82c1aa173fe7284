//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each op checks its inputs'
//! shapes, computes its value eagerly and fails with [`DiffError::NonFinite`]
//! if the result contains NaN or infinity. [`Graph::backward`] consumes the
//! tape and returns gradients for every leaf recorded with `requires_grad`.

mod graph;
mod optim;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::Sgd;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a matrix, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("invalid shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("slice {start}..{end} out of range for length {len}")]
    SliceOutOfRange { start: usize, end: usize, len: usize },
    #[error("axis {axis} invalid for rank {ndim}")]
    InvalidAxis { axis: usize, ndim: usize },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("dropout rate {rate} outside [0, 1)")]
    InvalidRate { rate: f64 },
    #[error("{op}: expected {expected} tensors, found {found}")]
    CountMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
}

#[cfg(test)]
mod tests;
