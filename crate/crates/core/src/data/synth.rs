use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;

/// Synthetic multimodal classification task. Informative channels carry a
/// sinusoid whose frequency depends on the class; the rest are noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub channels: usize,
    pub classes: usize,
    pub examples: usize,
    pub series_len: usize,
    /// Indices of the informative channels.
    pub informative: Vec<usize>,
    /// Half-width of the uniform noise added to informative channels.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            channels: 4,
            classes: 3,
            examples: 600,
            series_len: 32,
            informative: vec![0],
            noise: 0.2,
            seed: 0,
        }
    }
}

pub fn synth_dataset(spec: &SynthSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, len) = (spec.channels.max(1), spec.series_len.max(1));
    let classes = spec.classes.max(1);
    let mut values = Vec::with_capacity(spec.examples * k * len);
    let mut labels = Vec::with_capacity(spec.examples);
    for i in 0..spec.examples {
        let label = i % classes;
        labels.push(label);
        for c in 0..k {
            let informative = spec.informative.contains(&c);
            let phase = rng.random_range(-0.3..0.3) + c as f64;
            for t in 0..len {
                let v = if informative {
                    let freq = (label + 1) as f64;
                    let s = 0.7 * (2.0 * PI * freq * t as f64 / len as f64 + phase).sin();
                    s + rng.random_range(-1.0..1.0) * spec.noise
                } else {
                    rng.random_range(-0.9..0.9)
                };
                values.push(v.clamp(-1.0, 1.0));
            }
        }
    }
    Dataset::new(
        (0..k).map(|c| format!("ch{c}")).collect(),
        (0..classes).map(|c| format!("class{c}")).collect(),
        len,
        values,
        labels,
    )
    .expect("synthetic shapes are consistent")
}
