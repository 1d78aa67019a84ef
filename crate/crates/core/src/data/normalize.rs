use super::{ChannelStats, DataError, Dataset};

/// Per-channel min/max over every value of every example.
pub fn channel_stats(data: &Dataset) -> Vec<ChannelStats> {
    data.channels()
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..data.len() {
                for &v in data.series(i, k) {
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            ChannelStats {
                channel: name.clone(),
                min,
                max,
            }
        })
        .collect()
}

/// Affine map of each channel onto [-1, 1], clamped. A channel whose stats
/// are already exactly (-1, 1) is left untouched, which makes the map
/// idempotent; a constant channel maps to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub stats: Vec<ChannelStats>,
}

impl Normalizer {
    pub fn fit(train: &Dataset) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::Invalid("cannot fit normalization on an empty split".into()));
        }
        let stats = channel_stats(train);
        if let Some(s) = stats.iter().find(|s| !s.min.is_finite() || !s.max.is_finite()) {
            return Err(DataError::Invalid(format!("channel {} has non-finite values", s.channel)));
        }
        Ok(Normalizer { stats })
    }

    pub fn map(&self, channel: usize, v: f64) -> f64 {
        let s = &self.stats[channel];
        if s.min == -1.0 && s.max == 1.0 {
            return v.clamp(-1.0, 1.0);
        }
        let span = s.max - s.min;
        if span <= 0.0 {
            return 0.0;
        }
        if v >= s.max {
            return 1.0;
        }
        (-1.0 + 2.0 * (v - s.min) / span).clamp(-1.0, 1.0)
    }

    pub fn apply(&self, data: &mut Dataset) -> Result<(), DataError> {
        if data.channels().len() != self.stats.len() {
            return Err(DataError::Invalid(format!(
                "normalizer has {} channels, dataset {}",
                self.stats.len(),
                data.channels().len()
            )));
        }
        for i in 0..data.len() {
            for k in 0..self.stats.len() {
                for v in data.series_mut(i, k) {
                    *v = self.map(k, *v);
                }
            }
        }
        Ok(())
    }
}

/// Fits on the training split only and applies to both splits.
pub fn normalize_splits(train: &mut Dataset, test: &mut Dataset) -> Result<Normalizer, DataError> {
    let norm = Normalizer::fit(train)?;
    norm.apply(train)?;
    norm.apply(test)?;
    Ok(norm)
}
