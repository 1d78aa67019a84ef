//! Fusion-weight normalization and fusion-weight targets.

use crate::diffcore::{sigmoid, DiffError, NodeId, Tape};
use crate::lattice::LatticeNetwork;

use super::FusionError;

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Gate logits to fusion weights: elementwise sigmoid, then softmax across
/// modalities.
pub fn normalize_gate_logits(logits: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = logits.iter().map(|&v| sigmoid(v)).collect();
    softmax(&s)
}

/// Per-example reliability transform `exp(-loss^2)`, in (0, 1].
pub fn loss_affinity(loss: f64) -> f64 {
    (-loss * loss).exp()
}

/// Fixed-form targets: `softmax(sigmoid(exp(-loss^2)))`.
pub fn fusion_target_fixed(aux_losses: &[f64]) -> Vec<f64> {
    let a: Vec<f64> = aux_losses.iter().map(|&l| loss_affinity(l)).collect();
    normalize_gate_logits(&a)
}

/// Learned targets: `softmax(dln(exp(-loss^2)))`.
pub fn fusion_target_lattice(aux_losses: &[f64], net: &LatticeNetwork) -> Result<Vec<f64>, FusionError> {
    let u: Vec<f64> = aux_losses.iter().map(|&l| loss_affinity(l)).collect();
    Ok(softmax(&net.eval(&u)?))
}

/// `[batch, K]` gate logits to fusion weights on the tape.
pub fn extract_weights(tape: &mut Tape, logits: NodeId) -> Result<NodeId, DiffError> {
    let s = tape.sigmoid(logits)?;
    tape.softmax(s)
}

fn affinity(tape: &mut Tape, losses: NodeId) -> Result<NodeId, DiffError> {
    let sq = tape.square(losses)?;
    let neg = tape.neg(sq)?;
    tape.exp(neg)
}

/// `[batch, K]` auxiliary losses to fixed-form targets on the tape.
pub fn fixed_targets(tape: &mut Tape, aux_losses: NodeId) -> Result<NodeId, DiffError> {
    let a = affinity(tape, aux_losses)?;
    extract_weights(tape, a)
}

/// `[batch, K]` auxiliary losses to lattice-learned targets on the tape.
pub fn lattice_targets(tape: &mut Tape, aux_losses: NodeId, net: &LatticeNetwork) -> Result<NodeId, FusionError> {
    let u = affinity(tape, aux_losses)?;
    let raw = net.forward(tape, u)?;
    Ok(tape.softmax(raw)?)
}
