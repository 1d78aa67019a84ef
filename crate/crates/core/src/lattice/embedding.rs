use crate::diffcore::{softplus, NodeId, Parameter, Tape, Tensor};

use super::calibrator::inverse_softplus;
use super::LatticeError;

/// Affine map `Wx + b` whose coefficients on monotone inputs are kept
/// non-negative through a softplus reparameterization.
///
/// Raw coefficients are stored input-major (`[in, out]`) so the tape can use
/// a plain row-vector matmul.
#[derive(Clone, Debug)]
pub struct LinearEmbedding {
    pub raw_weight: Parameter,
    pub bias: Parameter,
    monotone_inputs: Vec<bool>,
    mask: Tensor,
    inverse_mask: Tensor,
}

impl LinearEmbedding {
    /// `weights` is `out x in`, row-major. Entries in masked columns are
    /// raw values passed through softplus.
    pub fn from_raw(
        name: &str,
        outputs: usize,
        inputs: usize,
        raw: &[f64],
        bias: Vec<f64>,
        monotone_inputs: Vec<bool>,
    ) -> Result<Self, LatticeError> {
        if raw.len() != outputs * inputs {
            return Err(LatticeError::DimensionMismatch {
                what: "embedding coefficients",
                expected: outputs * inputs,
                got: raw.len(),
            });
        }
        if bias.len() != outputs {
            return Err(LatticeError::DimensionMismatch {
                what: "embedding bias",
                expected: outputs,
                got: bias.len(),
            });
        }
        if monotone_inputs.len() != inputs {
            return Err(LatticeError::DimensionMismatch {
                what: "embedding monotone mask",
                expected: inputs,
                got: monotone_inputs.len(),
            });
        }
        let mut stored = vec![0.0; inputs * outputs];
        for o in 0..outputs {
            for i in 0..inputs {
                stored[i * outputs + o] = raw[o * inputs + i];
            }
        }
        let mask_data: Vec<f64> = (0..inputs * outputs)
            .map(|idx| if monotone_inputs[idx / outputs] { 1.0 } else { 0.0 })
            .collect();
        let inverse = mask_data.iter().map(|m| 1.0 - m).collect();
        Ok(LinearEmbedding {
            raw_weight: Parameter::new(format!("{name}.w"), Tensor::new(vec![inputs, outputs], stored)?),
            bias: Parameter::new(format!("{name}.b"), Tensor::vector(bias)),
            mask: Tensor::new(vec![inputs, outputs], mask_data)?,
            inverse_mask: Tensor::new(vec![inputs, outputs], inverse)?,
            monotone_inputs,
        })
    }

    /// Builds the embedding from effective coefficients (`out x in`);
    /// masked coefficients must be positive.
    pub fn from_effective(
        name: &str,
        outputs: usize,
        inputs: usize,
        weights: &[f64],
        bias: Vec<f64>,
        monotone_inputs: Vec<bool>,
    ) -> Result<Self, LatticeError> {
        let mut raw = weights.to_vec();
        for (idx, w) in raw.iter_mut().enumerate() {
            if monotone_inputs.get(idx % inputs).copied().unwrap_or(false) {
                if !(*w > 0.0) {
                    return Err(LatticeError::Invalid(format!(
                        "coefficient {w} on a monotone input must be positive"
                    )));
                }
                *w = inverse_softplus(*w);
            }
        }
        LinearEmbedding::from_raw(name, outputs, inputs, &raw, bias, monotone_inputs)
    }

    pub fn inputs(&self) -> usize {
        self.monotone_inputs.len()
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn monotone_inputs(&self) -> &[bool] {
        &self.monotone_inputs
    }

    /// Effective coefficient matrix, `out x in` row-major.
    pub fn coefficients(&self) -> Vec<f64> {
        let (inp, out) = (self.inputs(), self.outputs());
        let raw = self.raw_weight.value.data();
        let mut w = vec![0.0; out * inp];
        for i in 0..inp {
            for o in 0..out {
                let r = raw[i * out + o];
                w[o * inp + i] = if self.monotone_inputs[i] { softplus(r) } else { r };
            }
        }
        w
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, LatticeError> {
        if x.len() != self.inputs() {
            return Err(LatticeError::DimensionMismatch {
                what: "embedding input",
                expected: self.inputs(),
                got: x.len(),
            });
        }
        let w = self.coefficients();
        let inp = self.inputs();
        Ok(self
            .bias
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| b + (0..inp).map(|i| w[o * inp + i] * x[i]).sum::<f64>())
            .collect())
    }

    /// `x [batch, in] -> [batch, out]` on the tape.
    pub fn apply(&self, tape: &mut Tape, x: NodeId, raw: NodeId, bias: NodeId) -> Result<NodeId, LatticeError> {
        let width = tape.value(x).shape().last().copied().unwrap_or(0);
        if width != self.inputs() {
            return Err(LatticeError::DimensionMismatch {
                what: "embedding input",
                expected: self.inputs(),
                got: width,
            });
        }
        let mask = tape.leaf(self.mask.clone());
        let inverse = tape.leaf(self.inverse_mask.clone());
        let positive = tape.forward(crate::diffcore::OpKind::Softplus, &[raw])?;
        let constrained = tape.mul(positive, mask)?;
        let free = tape.mul(raw, inverse)?;
        let w = tape.add(constrained, free)?;
        let y = tape.matmul(x, w)?;
        Ok(tape.add(y, bias)?)
    }
}
