use serde::{Deserialize, Serialize};

use super::{DiffError, Tensor};

/// Trainable tensor with its gradient accumulator and optimizer moments.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    pub value: Tensor,
    pub grad: Tensor,
    first_moment: Option<Tensor>,
    second_moment: Option<Tensor>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
            first_moment: None,
            second_moment: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Replaces the value, keeping gradient shape in sync and dropping
    /// optimizer moments.
    pub fn set_value(&mut self, value: Tensor) {
        self.grad = Tensor::zeros(value.shape());
        self.value = value;
        self.first_moment = None;
        self.second_moment = None;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            ..Default::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(DiffError::InvalidHyper(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.kind == OptimizerKind::Adam {
            let beta_ok = |b: f64| (0.0..1.0).contains(&b);
            if !beta_ok(self.beta1) || !beta_ok(self.beta2) || !(self.eps > 0.0) {
                return Err(DiffError::InvalidHyper(format!(
                    "adam needs 0 <= beta < 1 and eps > 0, got beta1={} beta2={} eps={}",
                    self.beta1, self.beta2, self.eps
                )));
            }
        }
        Ok(())
    }
}

/// First-order optimizer applying SGD or Adam updates in place.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self, DiffError> {
        config.validate()?;
        Ok(Optimizer { config, steps: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Parameter>) {
        self.steps += 1;
        let c = self.config;
        let t = self.steps as f64;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);
        for p in params {
            match c.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= c.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let shape = p.value.shape().to_vec();
                    let m = p.first_moment.get_or_insert_with(|| Tensor::zeros(&shape));
                    let v = p.second_moment.get_or_insert_with(|| Tensor::zeros(&shape));
                    let (md, vd) = (m.data_mut(), v.data_mut());
                    for (i, (w, &g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                        md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g;
                        vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g * g;
                        let m_hat = md[i] / bias1;
                        let v_hat = vd[i] / bias2;
                        *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
        }
    }
}
