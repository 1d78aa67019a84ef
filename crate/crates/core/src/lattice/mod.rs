//! Deep lattice network building blocks with enforceable partial
//! monotonicity.
//!
//! Calibrators and linear embeddings keep their constraints through
//! reparameterization, so gradient steps cannot break them. Lattice vertex
//! tables are unconstrained parameters and must be passed through
//! [`Lattice::project_monotone`] after every optimizer step.

mod calibrator;
mod embedding;
mod grid;
mod network;
pub mod pav;

use thiserror::Error;

use crate::diffcore::DiffError;

pub use calibrator::{uniform_keypoints, Calibrator};
pub use embedding::LinearEmbedding;
pub use grid::{Lattice, MAX_PROJECTION_SWEEPS};
pub use network::{LatticeConfig, LatticeNetwork, Subnetwork};

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}
