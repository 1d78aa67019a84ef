use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lattice::LatticeConfig;

use super::FusionError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Late fusion by element-wise mean, no gating.
    Baseline,
    /// Gated weighted sum without auxiliary paths.
    NetGated,
    /// Gating plus weight-shared auxiliary classifiers.
    ArgateWs,
    /// Adds loss-weighted auxiliary terms and fixed fusion-weight targets.
    ArgatePlus,
    /// Fusion-weight targets learned by a monotone lattice network.
    ArgateL,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::NetGated,
        Variant::ArgateWs,
        Variant::ArgatePlus,
        Variant::ArgateL,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::NetGated => "netgated",
            Variant::ArgateWs => "argate_ws",
            Variant::ArgatePlus => "argate_plus",
            Variant::ArgateL => "argate_l",
        }
    }

    pub fn is_gated(self) -> bool {
        self != Variant::Baseline
    }

    pub fn has_aux(self) -> bool {
        matches!(self, Variant::ArgateWs | Variant::ArgatePlus | Variant::ArgateL)
    }

    /// Whether the loss carries the fusion-weight regularization term.
    pub fn has_targets(self) -> bool {
        matches!(self, Variant::ArgatePlus | Variant::ArgateL)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| FusionError::Config(format!("unknown variant {s:?}")))
    }
}

/// Per-modality feature extractor: conv/ReLU/max-pool blocks then one FC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    /// Output channels of each conv block; empty for an FC-only encoder.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    /// Width F of the feature vector.
    pub features: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            conv_channels: vec![16, 32],
            kernel: 5,
            pool: 2,
            features: 64,
        }
    }
}

impl EncoderSpec {
    /// Flattened width entering the FC layer for an input of `len` steps.
    pub fn flat_width(&self, in_channels: usize, len: usize) -> Result<usize, FusionError> {
        let mut len = len;
        let mut ch = in_channels;
        for &c in &self.conv_channels {
            if len < self.kernel {
                return Err(FusionError::Config(format!(
                    "sequence of length {len} is shorter than conv kernel {}",
                    self.kernel
                )));
            }
            len = len - self.kernel + 1;
            if len < self.pool || self.pool == 0 {
                return Err(FusionError::Config(format!(
                    "sequence of length {len} cannot be pooled by {}",
                    self.pool
                )));
            }
            len /= self.pool;
            ch = c;
        }
        Ok(ch * len)
    }
}

/// Which edges of the regularized loss carry no gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopGradientPolicy {
    /// Fusion weights are constants inside the weighted auxiliary-loss term.
    pub weights_in_aux_term: bool,
    /// Fixed-form targets are constants in the regularization term.
    pub fixed_targets: bool,
    /// Auxiliary losses are constants on their way into the lattice network.
    pub lattice_inputs: bool,
}

impl Default for StopGradientPolicy {
    fn default() -> Self {
        StopGradientPolicy {
            weights_in_aux_term: true,
            fixed_targets: true,
            lattice_inputs: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of modalities K.
    pub modalities: usize,
    /// Channels per modality tensor.
    pub in_channels: usize,
    /// Time steps per modality tensor.
    pub input_len: usize,
    pub classes: usize,
    pub encoder: EncoderSpec,
    /// Hidden width of the gating network ("FC-con").
    pub gate_hidden: usize,
    /// Hidden width of the classifier head of gated variants.
    pub head_hidden: usize,
    /// Hidden width of the baseline head; `None` picks the width that
    /// matches the gated main model's parameter count.
    pub baseline_head_hidden: Option<usize>,
    pub aux_hidden: usize,
    /// Weight of the auxiliary-loss term.
    pub alpha: f64,
    /// Weight of the fusion-weight regularization term.
    pub beta: f64,
    pub lattice: LatticeConfig,
    pub stop_gradient: StopGradientPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::ArgatePlus,
            modalities: 9,
            in_channels: 1,
            input_len: 128,
            classes: 6,
            encoder: EncoderSpec::default(),
            gate_hidden: 128,
            head_hidden: 128,
            baseline_head_hidden: None,
            aux_hidden: 64,
            alpha: 0.3,
            beta: 1.0,
            lattice: LatticeConfig::default(),
            stop_gradient: StopGradientPolicy::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.modalities == 0 {
            return Err(FusionError::Config("need at least one modality".into()));
        }
        if self.variant.is_gated() && self.modalities < 2 {
            return Err(FusionError::Config(format!(
                "{} gates between modalities and needs K >= 2",
                self.variant
            )));
        }
        if self.classes < 2 {
            return Err(FusionError::Config("need at least two classes".into()));
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(FusionError::Config(format!(
                "alpha and beta must be non-negative, got {} and {}",
                self.alpha, self.beta
            )));
        }
        for (name, v) in [
            ("features", self.encoder.features),
            ("gate_hidden", self.gate_hidden),
            ("head_hidden", self.head_hidden),
            ("aux_hidden", self.aux_hidden),
            ("in_channels", self.in_channels),
            ("input_len", self.input_len),
        ] {
            if v == 0 {
                return Err(FusionError::Config(format!("{name} must be positive")));
            }
        }
        self.encoder.flat_width(self.in_channels, self.input_len)?;
        Ok(())
    }

    pub fn encoder_params(&self) -> usize {
        let mut n = 0;
        let mut ch = self.in_channels;
        for &c in &self.encoder.conv_channels {
            n += c * ch * self.encoder.kernel + c;
            ch = c;
        }
        let flat = self.encoder.flat_width(self.in_channels, self.input_len).unwrap_or(0);
        n + flat * self.encoder.features + self.encoder.features
    }

    fn dense(i: usize, o: usize) -> usize {
        i * o + o
    }

    /// Parameters of the model used at inference (encoders, gate, head).
    pub fn main_param_count(&self) -> usize {
        let enc = self.modalities * self.encoder_params();
        let f = self.encoder.features;
        if self.variant.is_gated() {
            enc + Self::dense(self.modalities * f, self.gate_hidden)
                + Self::dense(self.gate_hidden, self.modalities)
                + Self::dense(f, self.head_hidden)
                + Self::dense(self.head_hidden, self.classes)
        } else {
            let h = self.baseline_hidden();
            enc + Self::dense(f, h) + Self::dense(h, self.classes)
        }
    }

    /// Parameters that exist only for training (auxiliary heads, lattice
    /// network).
    pub fn training_param_count(&self) -> usize {
        let f = self.encoder.features;
        let mut n = 0;
        if self.variant.has_aux() {
            n += self.modalities * (Self::dense(f, self.aux_hidden) + Self::dense(self.aux_hidden, self.classes));
        }
        if self.variant == Variant::ArgateL {
            let k = self.modalities;
            let d = self.lattice.embed_width(k);
            let m = self.lattice.keypoints;
            let per = k * m + (k * d + d) + d * m + self.lattice.vertices_per_dim.pow(d as u32);
            n += k * per;
        }
        n
    }

    /// Hidden width of the baseline head.
    pub fn baseline_hidden(&self) -> usize {
        if let Some(h) = self.baseline_head_hidden {
            return h;
        }
        let gated = ModelConfig {
            variant: Variant::NetGated,
            ..self.clone()
        };
        let target = gated.main_param_count() as f64;
        let enc = (self.modalities * self.encoder_params()) as f64;
        let f = self.encoder.features as f64;
        let c = self.classes as f64;
        // enc + (f + 1) h + (h + 1) c = target
        let h = ((target - enc - c) / (f + 1.0 + c)).round();
        h.max(1.0) as usize
    }
}
