use crate::diffcore::{NodeId, Tape};
use crate::lattice::LatticeNetwork;

use super::targets::{fixed_targets, lattice_targets};
use super::{FusionError, ModelConfig, Variant};

/// Batch-mean loss terms; `total` is the node to differentiate.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: NodeId,
    pub main: f64,
    /// Auxiliary term before scaling by alpha.
    pub aux: f64,
    /// Regularization term before scaling by beta.
    pub reg: f64,
    pub value: f64,
}

/// Per-example loss for one sample. `targets` is `None` for variants
/// without fusion-weight regularization; `weights` is `None` for unweighted
/// auxiliary terms.
pub fn total_loss(
    main: f64,
    aux: &[f64],
    weights: Option<&[f64]>,
    targets: Option<&[f64]>,
    alpha: f64,
    beta: f64,
) -> f64 {
    let aux_term: f64 = match weights {
        Some(w) => w.iter().zip(aux).map(|(w, l)| w * l).sum(),
        None => aux.iter().sum(),
    };
    let reg: f64 = match (weights, targets) {
        (Some(w), Some(t)) => w.iter().zip(t).map(|(w, t)| (w - t).powi(2)).sum(),
        _ => 0.0,
    };
    main + alpha * aux_term + beta * reg
}

fn finite(term: &'static str, value: Option<f64>) -> Result<f64, FusionError> {
    let value = value.unwrap_or(f64::NAN);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FusionError::NonFinite { term, value })
    }
}

fn batch_sum_mean(tape: &mut Tape, x: NodeId, batch: usize) -> Result<NodeId, FusionError> {
    let s = tape.sum(x)?;
    Ok(tape.scale(s, 1.0 / batch as f64)?)
}

/// Assembles the variant's objective from per-example main losses
/// `[batch]`, auxiliary losses `[batch, K]` and fusion weights `[batch, K]`.
pub fn combine_losses(
    tape: &mut Tape,
    config: &ModelConfig,
    main: NodeId,
    aux: Option<NodeId>,
    weights: Option<NodeId>,
    dln: Option<&LatticeNetwork>,
) -> Result<LossTerms, FusionError> {
    let main_mean = tape.mean(main)?;
    let main_v = finite("main", tape.value(main_mean).item())?;
    let variant = config.variant;
    let Some(aux) = aux.filter(|_| variant.has_aux()) else {
        return Ok(LossTerms {
            total: main_mean,
            main: main_v,
            aux: 0.0,
            reg: 0.0,
            value: main_v,
        });
    };
    let batch = tape.value(aux).shape()[0];
    let policy = config.stop_gradient;

    let (aux_term, reg_term) = if variant.has_targets() {
        let w = weights.ok_or_else(|| FusionError::Config(format!("{variant} needs fusion weights")))?;
        let w_aux = if policy.weights_in_aux_term {
            tape.stop_gradient(w)?
        } else {
            w
        };
        let weighted = tape.mul(w_aux, aux)?;
        let aux_term = batch_sum_mean(tape, weighted, batch)?;
        let t = if variant == Variant::ArgateL {
            let net = dln.ok_or_else(|| FusionError::Config("argate_l needs a lattice network".into()))?;
            let src = if policy.lattice_inputs {
                tape.stop_gradient(aux)?
            } else {
                aux
            };
            lattice_targets(tape, src, net)?
        } else {
            let src = if policy.fixed_targets {
                tape.stop_gradient(aux)?
            } else {
                aux
            };
            fixed_targets(tape, src)?
        };
        let diff = tape.sub(w, t)?;
        let sq = tape.square(diff)?;
        (aux_term, Some(batch_sum_mean(tape, sq, batch)?))
    } else {
        (batch_sum_mean(tape, aux, batch)?, None)
    };

    let aux_v = finite("aux", tape.value(aux_term).item())?;
    let scaled_aux = tape.scale(aux_term, config.alpha)?;
    let mut total = tape.add(main_mean, scaled_aux)?;
    let mut reg_v = 0.0;
    if let Some(reg) = reg_term {
        reg_v = finite("reg", tape.value(reg).item())?;
        let scaled = tape.scale(reg, config.beta)?;
        total = tape.add(total, scaled)?;
    }
    let value = finite("total", tape.value(total).item())?;
    Ok(LossTerms {
        total,
        main: main_v,
        aux: aux_v,
        reg: reg_v,
        value,
    })
}
