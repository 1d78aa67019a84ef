use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{NodeId, Parameter, Tape, Tensor};
use crate::lattice::LatticeNetwork;

use super::layers::{Encoder, Mlp};
use super::loss::{combine_losses, LossTerms};
use super::targets::extract_weights;
use super::{FusionError, ModelConfig, Variant};

/// One mini-batch: a `[batch, channels, len]` tensor per modality.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    /// Replaces the extracted fusion weights (`[batch, K]` or `[1, K]`).
    pub forced_weights: Option<Tensor>,
    /// Skip the auxiliary paths (inference).
    pub skip_aux: bool,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: NodeId,
    /// `[batch, K]`, gated variants only.
    pub weights: Option<NodeId>,
    /// Input of the classifier head.
    pub fused: NodeId,
    pub features: Vec<NodeId>,
    pub aux_logits: Vec<NodeId>,
}

/// Main model (encoders, gate, head) plus the training-only auxiliary
/// paths and lattice network of the regularized variants.
#[derive(Clone, Debug)]
pub struct FusionModel {
    config: ModelConfig,
    encoders: Vec<Encoder>,
    gate: Option<Mlp>,
    head: Mlp,
    aux: Vec<Mlp>,
    dln: Option<LatticeNetwork>,
}

impl FusionModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, FusionError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.modalities;
        let f = config.encoder.features;
        let flat = config.encoder.flat_width(config.in_channels, config.input_len)?;
        let encoders = (0..k)
            .map(|i| Encoder::new(&format!("enc.{i}"), &config.encoder, config.in_channels, flat, &mut rng))
            .collect();
        let variant = config.variant;
        let gate = variant
            .is_gated()
            .then(|| Mlp::new("gate", k * f, config.gate_hidden, k, &mut rng));
        let head_hidden = if variant.is_gated() {
            config.head_hidden
        } else {
            config.baseline_hidden()
        };
        let head = Mlp::new("head", f, head_hidden, config.classes, &mut rng);
        let aux = if variant.has_aux() {
            (0..k)
                .map(|i| Mlp::new(&format!("aux.{i}"), f, config.aux_hidden, config.classes, &mut rng))
                .collect()
        } else {
            Vec::new()
        };
        let dln = if variant == Variant::ArgateL {
            Some(LatticeNetwork::new("dln", k, &config.lattice, rng.random())?)
        } else {
            None
        };
        Ok(FusionModel {
            config,
            encoders,
            gate,
            head,
            aux,
            dln,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn lattice(&self) -> Option<&LatticeNetwork> {
        self.dln.as_ref()
    }

    pub fn lattice_mut(&mut self) -> Option<&mut LatticeNetwork> {
        self.dln.as_mut()
    }

    fn check_batch(&self, batch: &Batch) -> Result<usize, FusionError> {
        let k = self.config.modalities;
        if batch.inputs.len() != k {
            return Err(FusionError::MissingModality {
                expected: k,
                got: batch.inputs.len(),
            });
        }
        let n = batch.labels.len();
        let want = [n, self.config.in_channels, self.config.input_len];
        for (i, x) in batch.inputs.iter().enumerate() {
            if x.shape() != want {
                return Err(FusionError::Config(format!(
                    "modality {i} has shape {:?}, expected {want:?}",
                    x.shape()
                )));
            }
        }
        if let Some(&bad) = batch.labels.iter().find(|&&l| l >= self.config.classes) {
            return Err(FusionError::Config(format!(
                "label {bad} out of range for {} classes",
                self.config.classes
            )));
        }
        Ok(n)
    }

    pub fn forward(&self, tape: &mut Tape, batch: &Batch, opts: &ForwardOptions) -> Result<ForwardOutput, FusionError> {
        let n = self.check_batch(batch)?;
        let k = self.config.modalities;
        let mut features = Vec::with_capacity(k);
        for (enc, x) in self.encoders.iter().zip(&batch.inputs) {
            let x = tape.leaf(x.clone());
            features.push(enc.forward(tape, x)?);
        }
        let (fused, weights) = match &self.gate {
            None => {
                let mut acc = features[0];
                for &f in &features[1..] {
                    acc = tape.add(acc, f)?;
                }
                (tape.scale(acc, 1.0 / k as f64)?, None)
            }
            Some(gate) => {
                let w = match &opts.forced_weights {
                    Some(forced) => {
                        let rows = forced.shape().first().copied().unwrap_or(0);
                        if forced.rank() != 2 || forced.shape()[1] != k || (rows != n && rows != 1) {
                            return Err(FusionError::Config(format!(
                                "forced weights must be [{n}, {k}] or [1, {k}], got {:?}",
                                forced.shape()
                            )));
                        }
                        tape.leaf(forced.clone())
                    }
                    None => {
                        let cat = tape.concat(&features, 1)?;
                        let logits = gate.forward(tape, cat)?;
                        extract_weights(tape, logits)?
                    }
                };
                let mut acc = None;
                for (i, &f) in features.iter().enumerate() {
                    let wi = tape.slice(w, 1, i, 1)?;
                    let term = tape.mul(f, wi)?;
                    acc = Some(match acc {
                        None => term,
                        Some(a) => tape.add(a, term)?,
                    });
                }
                (acc.expect("K >= 1"), Some(w))
            }
        };
        let logits = self.head.forward(tape, fused)?;
        let aux_logits = if opts.skip_aux {
            Vec::new()
        } else {
            self.aux
                .iter()
                .zip(&features)
                .map(|(head, &f)| head.forward(tape, f))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(ForwardOutput {
            logits,
            weights,
            fused,
            features,
            aux_logits,
        })
    }

    /// Forward pass plus the variant's training loss.
    pub fn loss(&self, tape: &mut Tape, batch: &Batch) -> Result<(ForwardOutput, LossTerms), FusionError> {
        let out = self.forward(tape, batch, &ForwardOptions::default())?;
        let main = tape.cross_entropy(out.logits, &batch.labels)?;
        let aux = if out.aux_logits.is_empty() {
            None
        } else {
            let n = batch.len();
            let cols = out
                .aux_logits
                .iter()
                .map(|&l| {
                    let ce = tape.cross_entropy(l, &batch.labels)?;
                    tape.reshape(ce, vec![n, 1])
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(tape.concat(&cols, 1)?)
        };
        let terms = combine_losses(tape, &self.config, main, aux, out.weights, self.dln.as_ref())?;
        Ok((out, terms))
    }

    /// Main-model logits, `[batch, classes]`.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor, FusionError> {
        let mut tape = Tape::new();
        let opts = ForwardOptions {
            skip_aux: true,
            ..Default::default()
        };
        let out = self.forward(&mut tape, batch, &opts)?;
        Ok(tape.value(out.logits).clone())
    }

    /// Extracted fusion weights, `[batch, K]`; `None` for the baseline.
    pub fn fusion_weights(&self, batch: &Batch) -> Result<Option<Tensor>, FusionError> {
        let mut tape = Tape::new();
        let opts = ForwardOptions {
            skip_aux: true,
            ..Default::default()
        };
        let out = self.forward(&mut tape, batch, &opts)?;
        Ok(out.weights.map(|w| tape.value(w).clone()))
    }

    /// Parameters used at inference.
    pub fn main_params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.encoders.iter().flat_map(|e| e.params()).collect();
        if let Some(g) = &self.gate {
            out.extend(g.params());
        }
        out.extend(self.head.params());
        out
    }

    /// Parameters that only shape training.
    pub fn training_params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.aux.iter().flat_map(|a| a.params()).collect();
        if let Some(d) = &self.dln {
            out.extend(d.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.encoders.iter_mut().flat_map(|e| e.params_mut()).collect();
        if let Some(g) = &mut self.gate {
            out.extend(g.params_mut());
        }
        out.extend(self.head.params_mut());
        out.extend(self.aux.iter_mut().flat_map(|a| a.params_mut()));
        if let Some(d) = &mut self.dln {
            out.extend(d.params_mut());
        }
        out
    }

    pub fn main_param_count(&self) -> usize {
        self.main_params().iter().map(|p| p.len()).sum()
    }

    pub fn training_param_count(&self) -> usize {
        self.training_params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Restores lattice feasibility after an optimizer step.
    pub fn project(&mut self) {
        if let Some(d) = &mut self.dln {
            d.project();
        }
    }

    /// Named parameter values; training-only parameters are included on
    /// request.
    pub fn records(&self, include_training: bool) -> Vec<(String, Tensor)> {
        let mut params = self.main_params();
        if include_training {
            params.extend(self.training_params());
        }
        params
            .into_iter()
            .map(|p| (p.name().to_string(), p.value.clone()))
            .collect()
    }

    /// Loads named values. Every main-model parameter must be present;
    /// training-only parameters are loaded when found.
    pub fn load_records(&mut self, records: Vec<(String, Tensor)>) -> Result<(), FusionError> {
        let mut by_name: HashMap<String, Tensor> = records.into_iter().collect();
        let main: Vec<String> = self.main_params().iter().map(|p| p.name().to_string()).collect();
        for p in self.params_mut() {
            let is_main = main.iter().any(|m| m == p.name());
            match by_name.remove(p.name()) {
                Some(t) if t.shape() == p.value.shape() => p.set_value(t),
                Some(t) => {
                    return Err(FusionError::Checkpoint(format!(
                        "{} has shape {:?}, model expects {:?}",
                        p.name(),
                        t.shape(),
                        p.value.shape()
                    )))
                }
                None if is_main => {
                    return Err(FusionError::Checkpoint(format!("missing parameter {}", p.name())))
                }
                None => {}
            }
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(FusionError::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }
}
