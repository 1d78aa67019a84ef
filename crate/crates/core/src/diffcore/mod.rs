//! Dense `f64` tensors, a reverse-mode tape, and first-order optimizers.

pub mod checkpoint;
pub mod gradcheck;
mod kernels;
mod optim;
mod tape;
mod tensor;

use thiserror::Error;

pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, Parameter};
pub use tape::{CustomOp, Gradients, NodeId, OpKind, Tape};
pub use tensor::Tensor;

pub(crate) use kernels::{sigmoid, softplus};

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: empty input tensor with shape {shape:?}")]
    Empty { op: &'static str, shape: Vec<usize> },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error(
        "node {index} is from tape generation {node_generation} but the tape is at \
         {tape_generation}; the tape was reset after this value was recorded"
    )]
    StaleNode {
        index: usize,
        node_generation: u32,
        tape_generation: u32,
    },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("malformed binary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DiffError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        DiffError::ShapeMismatch { op, detail }
    }
}
