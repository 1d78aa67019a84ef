//! Multimodal datasets: HAR and driver-identification loaders, a synthetic
//! generator, normalization and a binary cache.

mod cache;
mod driver;
mod har;
mod manifest;
mod normalize;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::diffcore::{DiffError, Tensor};
use crate::fusion::Batch;

pub use cache::{load_cache, read_splits, save_cache, write_splits, CACHE_MAGIC};
pub use driver::{load_driver, DriverOptions, DRIVER_FEATURES, DRIVER_LABEL};
pub use har::{load_har, HAR_CHANNELS, HAR_CLASSES};
pub use manifest::{ChannelStats, DatasetManifest};
pub use normalize::{channel_stats, normalize_splits, Normalizer};
pub use synth::{synth_dataset, SynthSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {rows} rows but {labels} labels")]
    RowMismatch { path: PathBuf, rows: usize, labels: usize },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("window of {window} steps is longer than the {series}-step series of {who}")]
    WindowTooLong { window: usize, series: usize, who: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] DiffError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

/// `n` examples of `K` named channels, each a series of `len` values.
/// Values are stored example-major: `[n, K, len]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    channels: Vec<String>,
    classes: Vec<String>,
    len: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        channels: Vec<String>,
        classes: Vec<String>,
        len: usize,
        values: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        if channels.is_empty() || len == 0 {
            return Err(DataError::Invalid("need at least one channel of positive length".into()));
        }
        let expect = labels.len() * channels.len() * len;
        if values.len() != expect {
            return Err(DataError::Invalid(format!(
                "{} values for {} examples of {} x {len}",
                values.len(),
                labels.len(),
                channels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(DataError::Invalid(format!("label {bad} with {} classes", classes.len())));
        }
        Ok(Dataset {
            channels,
            classes,
            len,
            values,
            labels,
        })
    }

    pub fn empty_like(&self) -> Self {
        Dataset {
            values: Vec::new(),
            labels: Vec::new(),
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Steps per channel series.
    pub fn series_len(&self) -> usize {
        self.len
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    fn offset(&self, example: usize, channel: usize) -> usize {
        (example * self.channels.len() + channel) * self.len
    }

    pub fn series(&self, example: usize, channel: usize) -> &[f64] {
        let o = self.offset(example, channel);
        &self.values[o..o + self.len]
    }

    pub fn series_mut(&mut self, example: usize, channel: usize) -> &mut [f64] {
        let o = self.offset(example, channel);
        &mut self.values[o..o + self.len]
    }

    /// All channels of one example, `K * len` values.
    pub fn example(&self, example: usize) -> &[f64] {
        let w = self.channels.len() * self.len;
        &self.values[example * w..(example + 1) * w]
    }

    pub fn push(&mut self, example: &[f64], label: usize) -> Result<(), DataError> {
        if example.len() != self.channels.len() * self.len || label >= self.classes.len() {
            return Err(DataError::Invalid(format!(
                "example of {} values with label {label} does not fit",
                example.len()
            )));
        }
        self.values.extend_from_slice(example);
        self.labels.push(label);
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = self.empty_like();
        for &i in indices {
            out.values.extend_from_slice(self.example(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Model input for the given examples: one `[B, 1, len]` tensor per
    /// channel.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let b = indices.len();
        let inputs = (0..self.channels.len())
            .map(|k| {
                let mut data = Vec::with_capacity(b * self.len);
                for &i in indices {
                    data.extend_from_slice(self.series(i, k));
                }
                Tensor::new(vec![b, 1, self.len], data).expect("batch shape")
            })
            .collect();
        Batch {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Train/test pair with its manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: DatasetManifest,
}

/// Nearest-centroid accuracy (%) of a single channel: a cheap probe of how
/// much label information that channel carries.
pub fn channel_probe_accuracy(train: &Dataset, test: &Dataset, channel: usize) -> f64 {
    let c = train.classes.len();
    let len = train.len;
    let mut centroids = vec![0.0; c * len];
    let counts = train.class_counts();
    for i in 0..train.len() {
        let l = train.labels[i];
        for (acc, v) in centroids[l * len..(l + 1) * len].iter_mut().zip(train.series(i, channel)) {
            *acc += v;
        }
    }
    for (l, &n) in counts.iter().enumerate() {
        for v in &mut centroids[l * len..(l + 1) * len] {
            *v /= n.max(1) as f64;
        }
    }
    if test.is_empty() {
        return 0.0;
    }
    let correct = (0..test.len())
        .filter(|&i| {
            let x = test.series(i, channel);
            let best = (0..c)
                .filter(|&l| counts[l] > 0)
                .map(|l| {
                    let d: f64 = centroids[l * len..(l + 1) * len]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    (l, d)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(l, _)| l);
            best == Some(test.labels[i])
        })
        .count();
    100.0 * correct as f64 / test.len() as f64
}
