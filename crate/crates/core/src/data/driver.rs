use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::csv_error;
use super::{normalize_splits, DataError, Dataset, DatasetManifest, Splits};

/// Default feature selection (15 columns of the driving dataset).
pub const DRIVER_FEATURES: [&str; 15] = [
    "Long_Term_Fuel_Trim_Bank1",
    "Intake_air_pressure",
    "Accelerator_Pedal_value",
    "Fuel_consumption",
    "Torque_of_friction",
    "Maximum_indicated_engine_torque",
    "Engine_torque",
    "Calculated_LOAD_value",
    "Activation_of_Air_compressor",
    "Engine_coolant_temperature",
    "Transmission_oil_temperature",
    "Wheel_velocity_front_left-hand",
    "Wheel_velocity_front_right-hand",
    "Wheel_velocity_rear_left-hand",
    "Torque_converter_speed",
];

pub const DRIVER_LABEL: &str = "Class";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverOptions {
    pub window: usize,
    pub stride: usize,
    pub features: Vec<String>,
    pub label_column: String,
    /// Leading share of each driver's series used for training.
    pub train_fraction: f64,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            window: 1,
            stride: 1,
            features: DRIVER_FEATURES.iter().map(|s| s.to_string()).collect(),
            label_column: DRIVER_LABEL.into(),
            train_fraction: 0.8,
        }
    }
}

fn windows(
    rows: &[Vec<f64>],
    label: usize,
    who: &str,
    opts: &DriverOptions,
    out: &mut Dataset,
) -> Result<(), DataError> {
    let w = opts.window;
    if rows.len() < w {
        return Err(DataError::WindowTooLong {
            window: w,
            series: rows.len(),
            who: who.into(),
        });
    }
    let k = opts.features.len();
    let mut example = vec![0.0; k * w];
    for start in (0..=rows.len() - w).step_by(opts.stride) {
        for (t, row) in rows[start..start + w].iter().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                example[f * w + t] = v;
            }
        }
        out.push(&example, label)?;
    }
    Ok(())
}

/// Reads the driving CSV, keeps the configured features, splits each
/// driver's series chronologically and cuts both parts into windows. Each
/// feature becomes one channel.
pub fn load_driver(path: &Path, opts: &DriverOptions) -> Result<Splits, DataError> {
    if opts.window == 0 || opts.stride == 0 {
        return Err(DataError::Invalid("window and stride must be positive".into()));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(DataError::Invalid(format!("train fraction {} not in (0, 1)", opts.train_fraction)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownFeature(name.into()))
    };
    let cols = opts.features.iter().map(|f| find(f)).collect::<Result<Vec<_>, _>>()?;
    let label_col = find(&opts.label_column)?;

    let mut series: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = cols
            .iter()
            .map(|&c| {
                let tok = rec.get(c).unwrap_or("");
                tok.parse::<f64>().map_err(|_| DataError::Parse {
                    path: path.into(),
                    line,
                    msg: format!("non-numeric value {tok:?} in column {}", &headers[c]),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let who = rec.get(label_col).unwrap_or("").to_string();
        series.entry(who).or_default().push(row);
    }

    let classes: Vec<String> = series.keys().cloned().collect();
    let base = Dataset::new(opts.features.clone(), classes.clone(), opts.window, Vec::new(), Vec::new())?;
    let (mut train, mut test) = (base.clone(), base);
    for (label, (who, rows)) in series.iter().enumerate() {
        let cut = (rows.len() as f64 * opts.train_fraction).round() as usize;
        windows(&rows[..cut], label, who, opts, &mut train)?;
        windows(&rows[cut..], label, who, opts, &mut test)?;
    }
    let norm = normalize_splits(&mut train, &mut test)?;
    let manifest = DatasetManifest {
        name: "driver".into(),
        channels: opts.features.clone(),
        classes,
        series_len: opts.window,
        train_count: train.len(),
        test_count: test.len(),
        normalization: norm.stats,
        stats_split: "train".into(),
    };
    Ok(Splits { train, test, manifest })
}
