use std::sync::Arc;

use crate::diffcore::{sigmoid, softplus, CustomOp, NodeId, Parameter, Tape, Tensor};

use super::LatticeError;

/// Piecewise-linear 1-D keypoint function.
///
/// A monotone calibrator stores its first output directly and every later
/// output as a softplus increment over the previous one, so any raw value
/// yields non-decreasing outputs.
#[derive(Clone, Debug)]
pub struct Calibrator {
    keypoints: Vec<f64>,
    pub raw: Parameter,
    monotone: bool,
}

impl Calibrator {
    pub fn new(
        name: impl Into<String>,
        keypoints: Vec<f64>,
        raw: Vec<f64>,
        monotone: bool,
    ) -> Result<Self, LatticeError> {
        validate_keypoints(&keypoints)?;
        if raw.len() != keypoints.len() {
            return Err(LatticeError::DimensionMismatch {
                what: "calibrator outputs",
                expected: keypoints.len(),
                got: raw.len(),
            });
        }
        Ok(Calibrator {
            keypoints,
            raw: Parameter::new(name, Tensor::vector(raw)),
            monotone,
        })
    }

    /// Calibrator whose effective outputs are `outputs`. Monotone calibrators
    /// need strictly increasing outputs.
    pub fn from_outputs(
        name: impl Into<String>,
        keypoints: Vec<f64>,
        outputs: &[f64],
        monotone: bool,
    ) -> Result<Self, LatticeError> {
        let raw = if monotone {
            let mut raw = Vec::with_capacity(outputs.len());
            for (i, &o) in outputs.iter().enumerate() {
                if i == 0 {
                    raw.push(o);
                } else {
                    let step = o - outputs[i - 1];
                    if !(step > 0.0) {
                        return Err(LatticeError::Invalid(format!(
                            "monotone calibrator outputs must increase strictly, step {i} is {step}"
                        )));
                    }
                    raw.push(inverse_softplus(step));
                }
            }
            raw
        } else {
            outputs.to_vec()
        };
        Calibrator::new(name, keypoints, raw, monotone)
    }

    /// Identity map sampled at `m` keypoints spread uniformly over [0, 1].
    pub fn identity(name: impl Into<String>, m: usize, monotone: bool) -> Result<Self, LatticeError> {
        let kp = uniform_keypoints(m)?;
        let outputs = kp.clone();
        Calibrator::from_outputs(name, kp, &outputs, monotone)
    }

    pub fn keypoints(&self) -> &[f64] {
        &self.keypoints
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn outputs(&self) -> Vec<f64> {
        effective_outputs(self.raw.value.data(), self.monotone)
    }

    /// Interpolated value at `x`; inputs outside the keypoint range are
    /// clamped to the boundary keypoints.
    pub fn eval(&self, x: f64) -> f64 {
        let outs = self.outputs();
        let (seg, frac, _) = locate(&self.keypoints, x);
        outs[seg] * (1.0 - frac) + outs[seg + 1] * frac
    }

    /// Applies the calibrator elementwise to `x` on the tape, with gradients
    /// flowing to both `x` and the raw outputs.
    pub fn apply(&self, tape: &mut Tape, x: NodeId, raw: NodeId) -> Result<NodeId, LatticeError> {
        let outs = effective_outputs(tape.value(raw).data(), self.monotone);
        let xv = tape.value(x);
        let y = xv.map(|v| {
            let (seg, frac, _) = locate(&self.keypoints, v);
            outs[seg] * (1.0 - frac) + outs[seg + 1] * frac
        });
        let op = CalibratorOp {
            keypoints: self.keypoints.clone(),
            monotone: self.monotone,
        };
        Ok(tape.custom(Arc::new(op), &[x, raw], y)?)
    }
}

pub fn uniform_keypoints(m: usize) -> Result<Vec<f64>, LatticeError> {
    if m < 2 {
        return Err(LatticeError::Invalid(format!("calibrator needs at least 2 keypoints, got {m}")));
    }
    Ok((0..m).map(|i| i as f64 / (m - 1) as f64).collect())
}

fn validate_keypoints(kp: &[f64]) -> Result<(), LatticeError> {
    if kp.len() < 2 {
        return Err(LatticeError::Invalid(format!(
            "calibrator needs at least 2 keypoints, got {}",
            kp.len()
        )));
    }
    if kp.iter().any(|v| !v.is_finite()) || kp.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LatticeError::Invalid(format!(
            "calibrator keypoints must be finite and strictly increasing: {kp:?}"
        )));
    }
    Ok(())
}

pub(crate) fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn effective_outputs(raw: &[f64], monotone: bool) -> Vec<f64> {
    if !monotone {
        return raw.to_vec();
    }
    let mut out = Vec::with_capacity(raw.len());
    for (i, &r) in raw.iter().enumerate() {
        if i == 0 {
            out.push(r);
        } else {
            out.push(out[i - 1] + softplus(r));
        }
    }
    out
}

/// Segment index, interpolation fraction, and whether `x` was clamped.
fn locate(kp: &[f64], x: f64) -> (usize, f64, bool) {
    let last = kp.len() - 1;
    if !(x > kp[0]) {
        return (0, 0.0, x < kp[0]);
    }
    if x >= kp[last] {
        return (last - 1, 1.0, x > kp[last]);
    }
    // first keypoint strictly greater than x
    let hi = kp.partition_point(|&k| k <= x);
    let seg = hi - 1;
    (seg, (x - kp[seg]) / (kp[seg + 1] - kp[seg]), false)
}

#[derive(Debug)]
struct CalibratorOp {
    keypoints: Vec<f64>,
    monotone: bool,
}

impl CustomOp for CalibratorOp {
    fn name(&self) -> &'static str {
        "calibrator"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (x, raw) = (inputs[0], inputs[1]);
        let outs = effective_outputs(raw.data(), self.monotone);
        let mut dx = Tensor::zeros(x.shape());
        let mut d_out = vec![0.0; outs.len()];
        for ((&xv, &g), dxv) in x.data().iter().zip(grad.data()).zip(dx.data_mut()) {
            let (seg, frac, clamped) = locate(&self.keypoints, xv);
            d_out[seg] += g * (1.0 - frac);
            d_out[seg + 1] += g * frac;
            if !clamped {
                let slope = (outs[seg + 1] - outs[seg]) / (self.keypoints[seg + 1] - self.keypoints[seg]);
                *dxv = g * slope;
            }
        }
        let d_raw = if self.monotone {
            // out_i = raw_0 + sum_{j=1..=i} softplus(raw_j)
            let mut d = vec![0.0; outs.len()];
            let mut tail = 0.0;
            for i in (0..outs.len()).rev() {
                tail += d_out[i];
                d[i] = if i == 0 { tail } else { tail * sigmoid(raw.data()[i]) };
            }
            d
        } else {
            d_out
        };
        vec![dx, Tensor::new(raw.shape().to_vec(), d_raw).expect("shape")]
    }
}
