use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{AssignmentScheme, CorruptionSpec, FailureModel};
use crate::data::{DriverOptions, SynthSpec};
use crate::diffcore::OptimizerConfig;
use crate::fusion::{ModelConfig, Variant};

use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// HAR text layout under `root`.
    Har { root: PathBuf },
    /// Driving CSV.
    Driver {
        csv: PathBuf,
        #[serde(default)]
        options: DriverOptions,
    },
    /// Synthetic task; the trailing `test_fraction` of examples is the
    /// test split.
    Synth {
        #[serde(default)]
        spec: SynthSpec,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// Binary cache written by `prepare-data` or `corrupt`.
    Cache { path: PathBuf },
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_epochs() -> usize {
    30
}

fn default_batch() -> usize {
    64
}

/// One reproducible training run (per seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetSpec,
    /// Dataset-dependent sizes (modalities, length, classes) are filled in
    /// from the data.
    #[serde(default)]
    pub model: ModelConfig,
    /// `None` trains and tests on clean data.
    #[serde(default)]
    pub corruption: Option<CorruptionSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output_dir: PathBuf,
    /// Channel whose fusion weights are histogrammed after training.
    #[serde(default)]
    pub histogram_channel: Option<String>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Record test loss and accuracy after every epoch.
    #[serde(default = "default_true")]
    pub track_test: bool,
}

fn default_bins() -> usize {
    50
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, dataset: DatasetSpec, model: ModelConfig) -> Self {
        ExperimentConfig {
            name: name.into(),
            dataset,
            model,
            corruption: None,
            seeds: default_seeds(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            optimizer: OptimizerConfig::default(),
            output_dir: PathBuf::new(),
            histogram_channel: None,
            histogram_bins: default_bins(),
            track_test: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(HarnessError::Config("histogram_bins must be positive".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }

    /// `clean` or the corruption label, e.g. `uniform rclean=1`.
    pub fn setting(&self) -> String {
        match &self.corruption {
            None => "clean".into(),
            Some(c) => c.scheme.label(),
        }
    }

    pub fn failure(&self) -> String {
        match &self.corruption {
            None => "-".into(),
            Some(c) => c.failure.as_str().into(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.into(),
            msg: e.to_string(),
        })
    }
}

/// Cartesian grid over variants, corruption settings and failure models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub variants: Vec<Variant>,
    /// Adds an uncorrupted cell per variant.
    #[serde(default)]
    pub include_clean: bool,
    #[serde(default)]
    pub schemes: Vec<AssignmentScheme>,
    #[serde(default)]
    pub failures: Vec<FailureModel>,
    #[serde(default)]
    pub corruption_seed: u64,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.into(),
            msg: e.to_string(),
        })
    }

    /// One config per cell, named `variant/setting/failure`.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            let mut cell = |corruption: Option<CorruptionSpec>| {
                let mut cfg = self.base.clone();
                cfg.model.variant = variant;
                cfg.corruption = corruption;
                cfg.name = format!("{}/{}/{}", variant, cfg.setting(), cfg.failure());
                out.push(cfg);
            };
            if self.include_clean {
                cell(None);
            }
            for scheme in &self.schemes {
                for &failure in &self.failures {
                    cell(Some(CorruptionSpec {
                        failure,
                        scheme: scheme.clone(),
                        clean_fraction: 1.0 / 3.0,
                        seed: self.corruption_seed,
                    }));
                }
            }
        }
        out
    }
}
