use std::fs;
use std::path::{Path, PathBuf};

use super::{normalize_splits, DataError, Dataset, DatasetManifest, Splits};

pub const HAR_CHANNELS: [&str; 9] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];

pub const HAR_CLASSES: [&str; 6] = [
    "WALKING",
    "WALKING_UPSTAIRS",
    "WALKING_DOWNSTAIRS",
    "SITTING",
    "STANDING",
    "LAYING",
];

const STEPS: usize = 128;

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn parse_rows(path: &Path, width: Option<usize>) -> Result<Vec<Vec<f64>>, DataError> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| DataError::Parse {
                    path: path.into(),
                    line: i + 1,
                    msg: format!("non-numeric token {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(w) = width {
            if row.len() != w {
                return Err(DataError::Parse {
                    path: path.into(),
                    line: i + 1,
                    msg: format!("expected {w} values, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn load_split(root: &Path, split: &str) -> Result<Dataset, DataError> {
    let label_path = root.join(split).join(format!("y_{split}.txt"));
    let labels = parse_rows(&label_path, Some(1))?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let v = r[0];
            if v.fract() != 0.0 || !(1.0..=HAR_CLASSES.len() as f64).contains(&v) {
                return Err(DataError::Parse {
                    path: label_path.clone(),
                    line: i + 1,
                    msg: format!("activity label {v} outside 1..={}", HAR_CLASSES.len()),
                });
            }
            Ok(v as usize - 1)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let signals: PathBuf = root.join(split).join("Inertial Signals");
    let mut channels = Vec::with_capacity(HAR_CHANNELS.len());
    for name in HAR_CHANNELS {
        let path = signals.join(format!("{name}_{split}.txt"));
        let rows = parse_rows(&path, Some(STEPS))?;
        if rows.len() != labels.len() {
            return Err(DataError::RowMismatch {
                path,
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        channels.push(rows);
    }

    let n = labels.len();
    let mut values = Vec::with_capacity(n * HAR_CHANNELS.len() * STEPS);
    for i in 0..n {
        for ch in &channels {
            values.extend_from_slice(&ch[i]);
        }
    }
    Dataset::new(
        HAR_CHANNELS.iter().map(|s| s.to_string()).collect(),
        HAR_CLASSES.iter().map(|s| s.to_string()).collect(),
        STEPS,
        values,
        labels,
    )
}

/// Loads the "Inertial Signals" layout under `root` (the directory holding
/// `train/` and `test/`) and scales every channel to [-1, 1] with training
/// statistics.
pub fn load_har(root: &Path) -> Result<Splits, DataError> {
    let mut train = load_split(root, "train")?;
    let mut test = load_split(root, "test")?;
    let norm = normalize_splits(&mut train, &mut test)?;
    let manifest = DatasetManifest {
        name: "har".into(),
        channels: train.channels().to_vec(),
        classes: train.classes().to_vec(),
        series_len: STEPS,
        train_count: train.len(),
        test_count: test.len(),
        normalization: norm.stats,
        stats_split: "train".into(),
    };
    Ok(Splits { train, test, manifest })
}
