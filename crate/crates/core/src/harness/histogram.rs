use serde::{Deserialize, Serialize};

use crate::corruption::CorruptionManifest;
use crate::data::Dataset;

use super::train::Checkpoint;
use super::HarnessError;

/// Normalized histogram over [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin masses; sum to 1 unless `empty`.
    pub mass: Vec<f64>,
    pub mean: Option<f64>,
    pub count: usize,
    pub empty: bool,
}

impl Histogram {
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let mut counts = vec![0usize; bins];
        for &v in values {
            let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = values.len();
        Histogram {
            mass: counts.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect(),
            mean: (n > 0).then(|| values.iter().sum::<f64>() / n as f64),
            count: n,
            empty: n == 0,
        }
    }

    /// Mass strictly above `x`, counted on whole bins whose lower edge is
    /// at or above `x`.
    pub fn mass_above(&self, x: f64) -> f64 {
        let bins = self.mass.len() as f64;
        self.mass
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as f64 / bins >= x)
            .map(|(_, m)| m)
            .sum()
    }
}

/// Fusion weight of one channel, split by whether that channel was
/// corrupted in each example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionHistogram {
    pub channel: String,
    pub bins: usize,
    pub corrupt: Histogram,
    pub clean: Histogram,
    /// Raw per-example weights of the channel.
    #[serde(skip)]
    pub weights: Vec<f64>,
}

pub fn fusion_weight_histogram(
    ckpt: &Checkpoint,
    data: &Dataset,
    manifest: &CorruptionManifest,
    channel: &str,
    bins: usize,
) -> Result<FusionHistogram, HarnessError> {
    let variant = ckpt.model.variant();
    if !variant.is_gated() {
        return Err(HarnessError::UnsupportedVariant(variant));
    }
    ckpt.check_channels(data)?;
    if bins == 0 {
        return Err(HarnessError::Config("histogram needs at least one bin".into()));
    }
    let k = data
        .channel_index(channel)
        .ok_or_else(|| HarnessError::UnknownChannel(channel.into()))?;
    if manifest.len() != data.len() {
        return Err(HarnessError::Config(format!(
            "manifest has {} entries for {} examples",
            manifest.len(),
            data.len()
        )));
    }
    let mut weights = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(256) {
        let w = ckpt
            .model
            .fusion_weights(&data.batch(chunk))?
            .expect("gated variants return weights");
        weights.extend((0..chunk.len()).map(|i| w.row(i)[k]));
    }
    let (mut corrupt, mut clean) = (Vec::new(), Vec::new());
    for (i, &w) in weights.iter().enumerate() {
        if manifest.is_failing(i, channel) {
            corrupt.push(w);
        } else {
            clean.push(w);
        }
    }
    Ok(FusionHistogram {
        channel: channel.into(),
        bins,
        corrupt: Histogram::from_values(&corrupt, bins),
        clean: Histogram::from_values(&clean, bins),
        weights,
    })
}

impl FusionHistogram {
    /// `condition,bin_lo,bin_hi,mass` rows plus a mean row per condition.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,bin_lo,bin_hi,mass\n");
        for (name, h) in [("corrupt", &self.corrupt), ("clean", &self.clean)] {
            for (i, m) in h.mass.iter().enumerate() {
                let lo = i as f64 / self.bins as f64;
                let hi = (i + 1) as f64 / self.bins as f64;
                out.push_str(&format!("{name},{lo:.4},{hi:.4},{m:.6}\n"));
            }
            let mean = h.mean.map(|m| format!("{m:.6}")).unwrap_or_else(|| "empty".into());
            out.push_str(&format!("{name}_mean,,,{mean}\n"));
        }
        out
    }
}
