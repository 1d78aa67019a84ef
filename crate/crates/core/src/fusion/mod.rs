//! Gated multimodal fusion models and their training losses.

mod config;
mod layers;
mod loss;
mod model;
pub mod targets;

use thiserror::Error;

use crate::diffcore::DiffError;
use crate::lattice::LatticeError;

pub use config::{EncoderSpec, ModelConfig, StopGradientPolicy, Variant};
pub use layers::{Dense, Encoder, Mlp};
pub use loss::{combine_losses, total_loss, LossTerms};
pub use model::{Batch, ForwardOptions, ForwardOutput, FusionModel};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("expected {expected} modalities, got {got}")]
    MissingModality { expected: usize, got: usize },
    #[error("non-finite {term} loss: {value}")]
    NonFinite { term: &'static str, value: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}
