use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorruptionError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub example_index: usize,
    pub is_clean: bool,
    pub failing_channels: Vec<String>,
    /// Master seed of the spec that produced the entry.
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    example_index: usize,
    is_clean: bool,
    failing_channels: String,
    seed: u64,
}

/// Per-example record of which channels were replaced by noise.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorruptionManifest {
    pub entries: Vec<ManifestEntry>,
}

fn err(path: &Path, e: impl ToString) -> CorruptionError {
    CorruptionError::Manifest {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

impl CorruptionManifest {
    /// All-clean manifest for `n` examples.
    pub fn clean(n: usize) -> Self {
        CorruptionManifest {
            entries: (0..n)
                .map(|i| ManifestEntry {
                    example_index: i,
                    is_clean: true,
                    failing_channels: Vec::new(),
                    seed: 0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_failing(&self, example: usize, channel: &str) -> bool {
        self.entries[example].failing_channels.iter().any(|c| c == channel)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CorruptionError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| err(path, e))?;
        for e in &self.entries {
            w.serialize(Row {
                example_index: e.example_index,
                is_clean: e.is_clean,
                failing_channels: e.failing_channels.join(";"),
                seed: e.seed,
            })
            .map_err(|e| err(path, e))?;
        }
        w.flush().map_err(|e| err(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self, CorruptionError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| err(path, e))?;
        let mut entries = Vec::new();
        for (i, row) in r.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| err(path, format!("line {}: {e}", i + 2)))?;
            if row.example_index != i {
                return Err(err(path, format!("line {}: example_index {} out of order", i + 2, row.example_index)));
            }
            entries.push(ManifestEntry {
                example_index: row.example_index,
                is_clean: row.is_clean,
                failing_channels: row
                    .failing_channels
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                seed: row.seed,
            });
        }
        Ok(CorruptionManifest { entries })
    }
}
