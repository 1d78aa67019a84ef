//! Central finite-difference gradient checking.
//!
//! The numerical side only ever reads forward values, so it stays
//! independent of the pullback code it is used to audit.

use super::{DiffError, NodeId, Tape, Tensor};

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, element index) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares tape gradients of the scalar produced by `build` with central
/// differences of step `h` on every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, DiffError>,
{
    let eval = |vals: &[Tensor]| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = vals.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = build(&mut tape, &ids)?;
        tape.value(out)
            .item()
            .ok_or_else(|| DiffError::NonScalarLoss(tape.value(out).shape().to_vec()))
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = build(&mut tape, &ids)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, id) in ids.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].shape());
        let analytic = grads.get(*id).unwrap_or(&zeros).clone();
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst = (i, j);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Reduces a tensor-valued node to a scalar by a fixed random projection,
/// so every output element contributes a distinct weight to the check.
pub fn project(tape: &mut Tape, x: NodeId, weights: &Tensor) -> Result<NodeId, DiffError> {
    let w = tape.leaf(weights.clone());
    let prod = tape.mul(x, w)?;
    tape.sum(prod)
}
