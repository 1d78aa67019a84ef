use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub channel: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub channels: Vec<String>,
    pub classes: Vec<String>,
    pub series_len: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Per-channel min/max used for scaling to [-1, 1].
    pub normalization: Vec<ChannelStats>,
    /// Split the normalization constants were computed on.
    pub stats_split: String,
}

#[derive(Serialize, Deserialize)]
struct Row {
    section: String,
    key: String,
    value: String,
}

fn row(section: &str, key: impl ToString, value: impl ToString) -> Row {
    Row {
        section: section.into(),
        key: key.to_string(),
        value: value.to_string(),
    }
}

impl DatasetManifest {
    /// CSV with `section,key,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut rows = vec![
            row("dataset", "name", &self.name),
            row("dataset", "series_len", self.series_len),
            row("split", "train", self.train_count),
            row("split", "test", self.test_count),
            row("normalization", "stats_split", &self.stats_split),
        ];
        rows.extend(self.classes.iter().enumerate().map(|(i, c)| row("class", i, c)));
        rows.extend(self.channels.iter().enumerate().map(|(i, c)| row("channel", i, c)));
        for s in &self.normalization {
            rows.push(row("min", &s.channel, format!("{:?}", s.min)));
            rows.push(row("max", &s.channel, format!("{:?}", s.max)));
        }
        for r in rows {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self, DataError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut m = DatasetManifest {
            name: String::new(),
            channels: Vec::new(),
            classes: Vec::new(),
            series_len: 0,
            train_count: 0,
            test_count: 0,
            normalization: Vec::new(),
            stats_split: String::new(),
        };
        for (i, rec) in r.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let num = |v: &str| {
                v.parse::<f64>().map_err(|e| DataError::Parse {
                    path: path.into(),
                    line,
                    msg: e.to_string(),
                })
            };
            match (rec.section.as_str(), rec.key.as_str()) {
                ("dataset", "name") => m.name = rec.value,
                ("dataset", "series_len") => m.series_len = num(&rec.value)? as usize,
                ("split", "train") => m.train_count = num(&rec.value)? as usize,
                ("split", "test") => m.test_count = num(&rec.value)? as usize,
                ("normalization", "stats_split") => m.stats_split = rec.value,
                ("class", _) => m.classes.push(rec.value),
                ("channel", _) => m.channels.push(rec.value),
                ("min", ch) => m.normalization.push(ChannelStats {
                    channel: ch.into(),
                    min: num(&rec.value)?,
                    max: f64::NAN,
                }),
                ("max", ch) => {
                    let v = num(&rec.value)?;
                    match m.normalization.iter_mut().find(|s| s.channel == ch) {
                        Some(s) => s.max = v,
                        None => {
                            return Err(DataError::Parse {
                                path: path.into(),
                                line,
                                msg: format!("max for {ch} before its min"),
                            })
                        }
                    }
                }
                (s, k) => {
                    return Err(DataError::Parse {
                        path: path.into(),
                        line,
                        msg: format!("unknown entry {s}/{k}"),
                    })
                }
            }
        }
        Ok(m)
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    DataError::Parse {
        path: path.into(),
        line,
        msg: e.to_string(),
    }
}
