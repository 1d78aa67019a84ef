//! Experiment orchestration: training, evaluation, fusion-weight analysis,
//! grids and reports.

mod config;
mod grid;
mod histogram;
mod report;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::corruption::CorruptionError;
use crate::data::DataError;
use crate::diffcore::DiffError;
use crate::fusion::{FusionError, Variant};

pub use config::{DatasetSpec, ExperimentConfig, GridConfig};
pub use grid::{run_experiment_grid, Executor};
pub use histogram::{fusion_weight_histogram, FusionHistogram, Histogram};
pub use report::{aggregate, collect_reports, render_csv, render_markdown, RunReport, SeedReport, TableRow};
pub use train::{
    evaluate_accuracy, load_checkpoint, load_splits, prepare_run_data, run_experiment, save_checkpoint, train,
    Checkpoint, CheckpointMeta, EpochStats, RunData, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(
        "non-finite {term} loss at epoch {epoch}, step {step} (seed {seed}); \
         last good parameters saved to {}", checkpoint.display()
    )]
    NonFinite {
        seed: u64,
        epoch: usize,
        step: usize,
        term: &'static str,
        checkpoint: PathBuf,
    },
    #[error("{0} has no fusion weights")]
    UnsupportedVariant(Variant),
    #[error("checkpoint expects channels {expected:?}, dataset has {got:?}")]
    ChannelMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("run {name} failed: {msg}")]
    Run { name: String, msg: String },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
