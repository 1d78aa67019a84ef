use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corruption::{corrupt_splits, CorruptionManifest};
use crate::data::{load_cache, load_driver, load_har, synth_dataset, Dataset, DatasetManifest, Splits};
use crate::diffcore::{checkpoint, Optimizer, Tape};
use crate::fusion::{FusionError, FusionModel, ModelConfig};

use super::histogram::fusion_weight_histogram;
use super::report::{RunReport, SeedReport};
use super::{DatasetSpec, ExperimentConfig, HarnessError};

/// Splits plus the per-example corruption record of each split.
#[derive(Clone, Debug)]
pub struct RunData {
    pub splits: Splits,
    pub train_manifest: CorruptionManifest,
    pub test_manifest: CorruptionManifest,
}

pub fn load_splits(spec: &DatasetSpec) -> Result<Splits, HarnessError> {
    Ok(match spec {
        DatasetSpec::Har { root } => load_har(root)?,
        DatasetSpec::Driver { csv, options } => load_driver(csv, options)?,
        DatasetSpec::Cache { path } => load_cache(path)?,
        DatasetSpec::Synth { spec, test_fraction } => {
            if !(0.0..1.0).contains(test_fraction) {
                return Err(HarnessError::Config(format!("test_fraction {test_fraction} not in [0, 1)")));
            }
            let all = synth_dataset(spec);
            let n_test = (all.len() as f64 * test_fraction).round() as usize;
            let cut = all.len() - n_test;
            let train = all.subset(&(0..cut).collect::<Vec<_>>());
            let test = all.subset(&(cut..all.len()).collect::<Vec<_>>());
            let manifest = DatasetManifest {
                name: "synth".into(),
                channels: all.channels().to_vec(),
                classes: all.classes().to_vec(),
                series_len: all.series_len(),
                train_count: train.len(),
                test_count: test.len(),
                normalization: Vec::new(),
                stats_split: "none".into(),
            };
            Splits { train, test, manifest }
        }
    })
}

/// Loads the dataset and applies the configured corruption.
pub fn prepare_run_data(cfg: &ExperimentConfig) -> Result<RunData, HarnessError> {
    let splits = load_splits(&cfg.dataset)?;
    Ok(match &cfg.corruption {
        None => RunData {
            train_manifest: CorruptionManifest::clean(splits.train.len()),
            test_manifest: CorruptionManifest::clean(splits.test.len()),
            splits,
        },
        Some(spec) => {
            let (splits, train_manifest, test_manifest) = corrupt_splits(&splits, spec)?;
            RunData {
                splits,
                train_manifest,
                test_manifest,
            }
        }
    })
}

/// Sidecar describing a checkpoint, stored as `<checkpoint>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub channels: Vec<String>,
    pub classes: Vec<String>,
    pub seed: u64,
}

/// A model together with the dataset layout it was trained on.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: FusionModel,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn check_channels(&self, data: &Dataset) -> Result<(), HarnessError> {
        if data.channels() != self.meta.channels || data.series_len() != self.meta.model.input_len {
            return Err(HarnessError::ChannelMismatch {
                expected: self.meta.channels.clone(),
                got: data.channels().to_vec(),
            });
        }
        Ok(())
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes parameters and the JSON sidecar. Inference checkpoints hold the
/// main model only.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, include_training: bool) -> Result<(), HarnessError> {
    checkpoint::save(path, &ckpt.model.records(include_training))?;
    let json = serde_json::to_string_pretty(&ckpt.meta).expect("meta serializes");
    let side = sidecar(path);
    fs::write(&side, json).map_err(|e| HarnessError::io(side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| HarnessError::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: side.clone(),
        msg: e.to_string(),
    })?;
    let mut model = FusionModel::new(meta.model.clone(), meta.seed)?;
    model.load_records(checkpoint::load(path)?)?;
    Ok(Checkpoint { model, meta })
}

/// Model config with the sizes taken from the data.
fn resolve_model(cfg: &ModelConfig, data: &Dataset) -> ModelConfig {
    ModelConfig {
        modalities: data.channels().len(),
        in_channels: 1,
        input_len: data.series_len(),
        classes: data.classes().len(),
        ..cfg.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

/// Main-model accuracy (%) over `data`; auxiliary paths are not consulted.
pub fn evaluate_accuracy(ckpt: &Checkpoint, data: &Dataset) -> Result<f64, HarnessError> {
    Ok(evaluate(ckpt, data)?.1)
}

/// (mean cross-entropy, accuracy %)
fn evaluate(ckpt: &Checkpoint, data: &Dataset) -> Result<(f64, f64), HarnessError> {
    ckpt.check_channels(data)?;
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(256) {
        let batch = data.batch(chunk);
        let logits = ckpt.model.predict(&batch)?;
        for (i, &label) in batch.labels.iter().enumerate() {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            let pred = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
            correct += usize::from(pred == label);
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, 100.0 * correct as f64 / n))
}

/// Trains one seed. `dir` receives the last good parameters if a loss
/// term turns non-finite.
pub fn train(cfg: &ExperimentConfig, data: &RunData, seed: u64, dir: &Path) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let train_set = &data.splits.train;
    let model_cfg = resolve_model(&cfg.model, train_set);
    let meta = CheckpointMeta {
        model: model_cfg.clone(),
        channels: train_set.channels().to_vec(),
        classes: train_set.classes().to_vec(),
        seed,
    };
    let mut ckpt = Checkpoint {
        model: FusionModel::new(model_cfg, seed)?,
        meta,
    };
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_fba7_c4e5);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut tape = Tape::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;

    for epoch in 0..cfg.epochs {
        let snapshot = ckpt.model.clone();
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.batch(chunk);
            tape.reset();
            let loss = ckpt.model.loss(&mut tape, &batch).and_then(|(_, terms)| {
                let grads = tape.backward(terms.total)?;
                ckpt.model.zero_grad();
                grads.accumulate(ckpt.model.params_mut());
                match ckpt.model.params_mut().iter().find(|p| !p.grad.all_finite()) {
                    Some(p) => Err(FusionError::NonFinite {
                        term: "grad",
                        value: p.grad.data().iter().copied().find(|v| !v.is_finite()).unwrap_or(f64::NAN),
                    }),
                    None => Ok(terms),
                }
            });
            let terms = match loss {
                Ok(terms) => terms,
                Err(FusionError::NonFinite { term, .. }) => {
                    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
                    let path = dir.join("last_good.argt");
                    let good = Checkpoint {
                        model: snapshot,
                        meta: ckpt.meta.clone(),
                    };
                    save_checkpoint(&path, &good, true)?;
                    return Err(HarnessError::NonFinite {
                        seed,
                        epoch,
                        step,
                        term,
                        checkpoint: path,
                    });
                }
                Err(e) => return Err(e.into()),
            };
            opt.step(ckpt.model.params_mut());
            ckpt.model.project();
            total += terms.value * chunk.len() as f64;
            seen += chunk.len();
            steps += 1;
        }
        let (test_loss, test_accuracy) = if cfg.track_test && !data.splits.test.is_empty() {
            let (l, a) = evaluate(&ckpt, &data.splits.test)?;
            (Some(l), Some(a))
        } else {
            (None, None)
        };
        epochs.push(EpochStats {
            epoch,
            train_loss: if seen == 0 { 0.0 } else { total / seen as f64 },
            test_loss,
            test_accuracy,
        });
    }
    Ok(TrainOutcome {
        checkpoint: ckpt,
        epochs,
        steps,
    })
}

fn run_seed(cfg: &ExperimentConfig, data: &RunData, seed: u64) -> Result<SeedReport, HarnessError> {
    let start = Instant::now();
    let dir = cfg.output_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let out = train(cfg, data, seed, &dir)?;
    let ckpt_path = dir.join("model.argt");
    save_checkpoint(&ckpt_path, &out.checkpoint, false)?;
    let accuracy = evaluate_accuracy(&out.checkpoint, &data.splits.test)?;
    let histogram = match &cfg.histogram_channel {
        Some(ch) if cfg.model.variant.is_gated() => Some(fusion_weight_histogram(
            &out.checkpoint,
            &data.splits.test,
            &data.test_manifest,
            ch,
            cfg.histogram_bins,
        )?),
        _ => None,
    };
    Ok(SeedReport {
        seed,
        test_accuracy: Some(accuracy),
        epochs: out.epochs,
        histogram,
        checkpoint: Some(ckpt_path),
        wall_seconds: start.elapsed().as_secs_f64(),
        error: None,
    })
}

/// Trains every seed of `cfg` (or only `only_seed`), writes checkpoints and
/// `report.json` under the output directory. Seed failures are recorded in
/// the report rather than aborting the run.
pub fn run_experiment(cfg: &ExperimentConfig, only_seed: Option<u64>) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let data = prepare_run_data(cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    let seeds: Vec<u64> = match only_seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let mut reports = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let r = run_seed(cfg, &data, seed).unwrap_or_else(|e| SeedReport::failed(seed, e.to_string()));
        reports.push(r);
    }
    let report = RunReport::new(cfg, reports, start.elapsed().as_secs_f64());
    report.write(&cfg.output_dir.join("report.json"))?;
    Ok(report)
}
