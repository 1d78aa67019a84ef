use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::histogram::FusionHistogram;
use super::train::EpochStats;
use super::{ExperimentConfig, HarnessError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Test accuracy in percent.
    pub test_accuracy: Option<f64>,
    pub epochs: Vec<EpochStats>,
    pub histogram: Option<FusionHistogram>,
    pub checkpoint: Option<PathBuf>,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

impl SeedReport {
    pub fn failed(seed: u64, error: String) -> Self {
        SeedReport {
            seed,
            test_accuracy: None,
            epochs: Vec::new(),
            histogram: None,
            checkpoint: None,
            wall_seconds: 0.0,
            error: Some(error),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub variant: String,
    pub setting: String,
    pub failure: String,
    pub seeds: Vec<SeedReport>,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub wall_seconds: f64,
    pub error: Option<String>,
    pub config: ExperimentConfig,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; undefined below two values.
fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(var.sqrt())
}

impl RunReport {
    pub fn new(cfg: &ExperimentConfig, seeds: Vec<SeedReport>, wall_seconds: f64) -> Self {
        let accs: Vec<f64> = seeds.iter().filter_map(|s| s.test_accuracy).collect();
        RunReport {
            name: cfg.name.clone(),
            variant: cfg.model.variant.to_string(),
            setting: cfg.setting(),
            failure: cfg.failure(),
            seeds,
            mean_accuracy: mean(&accs),
            std_accuracy: sample_std(&accs),
            wall_seconds,
            error: None,
            config: cfg.clone(),
        }
    }

    pub fn failed(cfg: &ExperimentConfig, error: String) -> Self {
        RunReport {
            error: Some(error),
            ..RunReport::new(cfg, Vec::new(), 0.0)
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, json).map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.into(),
            msg: e.to_string(),
        })
    }

    /// Mean over seeds of each condition's mean fusion weight.
    pub fn fusion_weight_means(&self) -> (Option<f64>, Option<f64>) {
        let pick = |f: fn(&FusionHistogram) -> Option<f64>| {
            let v: Vec<f64> = self.seeds.iter().filter_map(|s| s.histogram.as_ref().and_then(f)).collect();
            mean(&v)
        };
        (pick(|h| h.clean.mean), pick(|h| h.corrupt.mean))
    }
}

/// Every `report.json` under `dir`, in path order.
pub fn collect_reports(dir: &Path) -> Result<Vec<RunReport>, HarnessError> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "report.json") {
                paths.push(path);
            }
        }
    }
    paths.sort();
    paths.iter().map(|p| RunReport::read(p)).collect()
}

/// One table cell keyed by (variant, setting, failure).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub variant: String,
    pub setting: String,
    pub failure: String,
    pub accuracies: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub fw_clean_mean: Option<f64>,
    pub fw_corrupt_mean: Option<f64>,
    pub errors: Vec<String>,
}

pub fn aggregate(reports: &[RunReport]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = Vec::new();
    let mut fw: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for r in reports {
        let pos = rows
            .iter()
            .position(|row| row.variant == r.variant && row.setting == r.setting && row.failure == r.failure);
        let i = pos.unwrap_or_else(|| {
            rows.push(TableRow {
                variant: r.variant.clone(),
                setting: r.setting.clone(),
                failure: r.failure.clone(),
                accuracies: Vec::new(),
                mean: None,
                std: None,
                fw_clean_mean: None,
                fw_corrupt_mean: None,
                errors: Vec::new(),
            });
            fw.push((Vec::new(), Vec::new()));
            rows.len() - 1
        });
        let row = &mut rows[i];
        row.errors.extend(r.error.iter().cloned());
        for s in &r.seeds {
            match (s.test_accuracy, &s.error) {
                (Some(a), _) => row.accuracies.push(a),
                (None, Some(e)) => row.errors.push(format!("seed {}: {e}", s.seed)),
                (None, None) => {}
            }
            if let Some(h) = &s.histogram {
                fw[i].0.extend(h.clean.mean);
                fw[i].1.extend(h.corrupt.mean);
            }
        }
    }
    for (row, (clean, corrupt)) in rows.iter_mut().zip(fw) {
        row.mean = mean(&row.accuracies);
        row.std = sample_std(&row.accuracies);
        row.fw_clean_mean = mean(&clean);
        row.fw_corrupt_mean = mean(&corrupt);
    }
    rows
}

fn opt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn render_csv(rows: &[TableRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "setting",
        "failure",
        "seeds",
        "mean_accuracy",
        "std_accuracy",
        "accuracies",
        "fw_clean_mean",
        "fw_corrupt_mean",
        "errors",
    ])
    .expect("in-memory write");
    for r in rows {
        let accs: Vec<String> = r.accuracies.iter().map(|a| format!("{a:.2}")).collect();
        w.write_record([
            r.variant.clone(),
            r.setting.clone(),
            r.failure.clone(),
            r.accuracies.len().to_string(),
            opt2(r.mean),
            opt2(r.std),
            accs.join(";"),
            opt4(r.fw_clean_mean),
            opt4(r.fw_corrupt_mean),
            r.errors.join(" | "),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn render_markdown(rows: &[TableRow]) -> String {
    let mut out = String::from(
        "| variant | setting | failure | accuracy (%) | seeds | errors |\n|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let acc = match (r.mean, r.std) {
            (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
            (Some(m), None) => format!("{m:.2}"),
            (None, _) => "n/a".into(),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {acc} | {} | {} |\n",
            r.variant,
            r.setting,
            r.failure,
            r.accuracies.len(),
            r.errors.len()
        ));
    }
    out
}
