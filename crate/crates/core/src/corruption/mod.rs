//! Sensor-failure simulation: noise models, failing-channel assignment and
//! corrupted dataset construction.

mod manifest;

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Splits};

pub use manifest::{CorruptionManifest, ManifestEntry};

#[derive(Debug, Error)]
pub enum CorruptionError {
    #[error("invalid corruption spec: {0}")]
    Spec(String),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("{path}: {msg}")]
    Manifest { path: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureModel {
    /// i.i.d. Uniform[-1, 1].
    Uniform,
    /// i.i.d. Normal(0, 1).
    Gaussian,
}

impl FailureModel {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            FailureModel::Uniform => rng.random_range(-1.0..=1.0),
            FailureModel::Gaussian => rng.sample(StandardNormal),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FailureModel::Uniform => "uniform",
            FailureModel::Gaussian => "gaussian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentScheme {
    /// The same channels fail in every corrupted example. The explicit
    /// list decides which; `n_fclean` labels the setting.
    Fixed { n_fclean: usize, corrupted: Vec<String> },
    /// `n - n_rclean` channels, drawn per example.
    Random { n_rclean: usize },
    /// Failing count drawn per example from the phase's inclusive range.
    GenerationTest { train: (usize, usize), test: (usize, usize) },
}

impl AssignmentScheme {
    /// Fixed HAR assignment with six clean channels.
    pub fn har_fixed_six() -> Self {
        AssignmentScheme::Fixed {
            n_fclean: 6,
            corrupted: vec!["body_acc_z".into(), "body_gyro_x".into()],
        }
    }

    /// Fixed driver assignment with five or seven clean channels.
    pub fn driver_fixed(n_fclean: usize) -> Option<Self> {
        let mut corrupted: Vec<String> = [
            "Long_Term_Fuel_Trim_Bank1",
            "Maximum_indicated_engine_torque",
            "Calculated_LOAD_value",
            "Activation_of_Air_compressor",
            "Engine_coolant_temperature",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        match n_fclean {
            5 => {}
            7 => corrupted.extend(["Intake_air_pressure".to_string(), "Fuel_consumption".to_string()]),
            _ => return None,
        }
        Some(AssignmentScheme::Fixed { n_fclean, corrupted })
    }

    pub fn validate(&self, channels: &[String]) -> Result<(), CorruptionError> {
        let n = channels.len();
        match self {
            AssignmentScheme::Fixed { n_fclean, corrupted } => {
                for c in corrupted {
                    if !channels.contains(c) {
                        return Err(CorruptionError::UnknownChannel(c.clone()));
                    }
                }
                let distinct: BTreeSet<&String> = corrupted.iter().collect();
                if distinct.len() != corrupted.len() {
                    return Err(CorruptionError::Spec("corrupted list has duplicates".into()));
                }
                if *n_fclean > n {
                    return Err(CorruptionError::Spec(format!("n_fclean = {n_fclean} exceeds {n} channels")));
                }
            }
            AssignmentScheme::Random { n_rclean } => {
                if *n_rclean > n {
                    return Err(CorruptionError::Spec(format!("n_rclean = {n_rclean} exceeds {n} channels")));
                }
            }
            AssignmentScheme::GenerationTest { train, test } => {
                for (name, (a, b)) in [("train", train), ("test", test)] {
                    if a > b || *b > n {
                        return Err(CorruptionError::Spec(format!(
                            "{name} failing range ({a},{b}) is not within [0, {n}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Short label such as `rclean=1` or `(1,2)(3,8)`.
    pub fn label(&self) -> String {
        match self {
            AssignmentScheme::Fixed { n_fclean, .. } => format!("fclean={n_fclean}"),
            AssignmentScheme::Random { n_rclean } => format!("rclean={n_rclean}"),
            AssignmentScheme::GenerationTest { train, test } => {
                format!("({},{})({},{})", train.0, train.1, test.0, test.1)
            }
        }
    }
}

/// Draws the failing channel indices for one example.
pub fn assign_failing<R: Rng + ?Sized>(
    scheme: &AssignmentScheme,
    channels: &[String],
    phase: Phase,
    rng: &mut R,
) -> Result<BTreeSet<usize>, CorruptionError> {
    scheme.validate(channels)?;
    let n = channels.len();
    let count = match scheme {
        AssignmentScheme::Fixed { corrupted, .. } => {
            return Ok(corrupted
                .iter()
                .map(|c| channels.iter().position(|x| x == c).expect("validated"))
                .collect())
        }
        AssignmentScheme::Random { n_rclean } => n - n_rclean,
        AssignmentScheme::GenerationTest { train, test } => {
            let (a, b) = if phase == Phase::Train { *train } else { *test };
            rng.random_range(a..=b)
        }
    };
    Ok(sample(rng, n, count).into_iter().collect())
}

/// Fresh noise of the same length as `values`.
pub fn corrupt_channel<R: Rng + ?Sized>(values: &[f64], model: FailureModel, rng: &mut R) -> Vec<f64> {
    values.iter().map(|_| model.sample(rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub failure: FailureModel,
    pub scheme: AssignmentScheme,
    #[serde(default = "default_clean_fraction")]
    pub clean_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_clean_fraction() -> f64 {
    1.0 / 3.0
}

impl CorruptionSpec {
    pub fn new(failure: FailureModel, scheme: AssignmentScheme, seed: u64) -> Self {
        CorruptionSpec {
            failure,
            scheme,
            clean_fraction: default_clean_fraction(),
            seed,
        }
    }

    pub fn validate(&self, channels: &[String]) -> Result<(), CorruptionError> {
        if !(0.0..=1.0).contains(&self.clean_fraction) {
            return Err(CorruptionError::Spec(format!(
                "clean fraction {} not in [0, 1]",
                self.clean_fraction
            )));
        }
        self.scheme.validate(channels)
    }

    /// Number of untouched examples out of `n`.
    pub fn clean_count(&self, n: usize) -> usize {
        ((n as f64 * self.clean_fraction).round() as usize).min(n)
    }

    /// Setting label used in reports, e.g. `uniform rclean=1`.
    pub fn label(&self) -> String {
        format!("{} {}", self.failure.as_str(), self.scheme.label())
    }
}

fn phase_tag(phase: Phase) -> u64 {
    match phase {
        Phase::Train => 0,
        Phase::Test => 1,
    }
}

/// Independent stream for one example, so the result does not depend on
/// construction order.
fn example_rng(seed: u64, phase: Phase, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase_tag(phase) << 62) | index as u64);
    rng
}

fn selection_rng(seed: u64, phase: Phase) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase_tag(phase) << 62) | (1 << 61));
    rng
}

/// Keeps a random `clean_count` subset untouched and corrupts the failing
/// channels of every other example.
pub fn build_corrupted_dataset(
    data: &Dataset,
    spec: &CorruptionSpec,
    phase: Phase,
) -> Result<(Dataset, CorruptionManifest), CorruptionError> {
    spec.validate(data.channels())?;
    let n = data.len();
    let mut is_clean = vec![false; n];
    for i in sample(&mut selection_rng(spec.seed, phase), n, spec.clean_count(n)) {
        is_clean[i] = true;
    }
    let mut out = data.clone();
    let mut entries = Vec::with_capacity(n);
    for (i, &clean) in is_clean.iter().enumerate() {
        let mut failing = BTreeSet::new();
        if !clean {
            let mut rng = example_rng(spec.seed, phase, i);
            failing = assign_failing(&spec.scheme, data.channels(), phase, &mut rng)?;
            for &k in &failing {
                let noise = corrupt_channel(data.series(i, k), spec.failure, &mut rng);
                out.series_mut(i, k).copy_from_slice(&noise);
            }
        }
        entries.push(ManifestEntry {
            example_index: i,
            is_clean: clean,
            failing_channels: failing.iter().map(|&k| data.channels()[k].clone()).collect(),
            seed: spec.seed,
        });
    }
    Ok((out, CorruptionManifest { entries }))
}

/// Corrupts both splits, returning the train and test manifests.
pub fn corrupt_splits(
    splits: &Splits,
    spec: &CorruptionSpec,
) -> Result<(Splits, CorruptionManifest, CorruptionManifest), CorruptionError> {
    let (train, train_m) = build_corrupted_dataset(&splits.train, spec, Phase::Train)?;
    let (test, test_m) = build_corrupted_dataset(&splits.test, spec, Phase::Test)?;
    Ok((
        Splits {
            train,
            test,
            manifest: splits.manifest.clone(),
        },
        train_m,
        test_m,
    ))
}
