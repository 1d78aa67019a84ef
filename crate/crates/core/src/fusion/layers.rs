use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{DiffError, NodeId, Parameter, Tape, Tensor};

use super::EncoderSpec;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Fully connected layer, `x [batch, in] -> [batch, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Dense {
    /// Uniform init with bound `1/sqrt(fan_in)` for weights and biases.
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Dense {
            weight: Parameter::new(format!("{name}.w"), uniform(rng, &[inputs, outputs], bound)),
            bias: Parameter::new(format!("{name}.b"), uniform(rng, &[outputs], bound)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, DiffError> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub weight: Parameter,
    pub bias: Parameter,
}

/// Conv/ReLU/pool stack followed by FC + ReLU.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub convs: Vec<ConvBlock>,
    pub fc: Dense,
    pool: usize,
    flat: usize,
}

impl Encoder {
    pub fn new(name: &str, spec: &EncoderSpec, in_channels: usize, flat: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::with_capacity(spec.conv_channels.len());
        let mut ch = in_channels;
        for (i, &c) in spec.conv_channels.iter().enumerate() {
            let bound = 1.0 / ((ch * spec.kernel) as f64).sqrt();
            convs.push(ConvBlock {
                weight: Parameter::new(format!("{name}.conv{i}.w"), uniform(rng, &[c, ch, spec.kernel], bound)),
                bias: Parameter::new(format!("{name}.conv{i}.b"), uniform(rng, &[c], bound)),
            });
            ch = c;
        }
        Encoder {
            convs,
            fc: Dense::new(&format!("{name}.fc"), flat, spec.features, rng),
            pool: spec.pool,
            flat,
        }
    }

    /// `x [batch, channels, len] -> [batch, features]`.
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, DiffError> {
        let batch = tape.value(x).shape()[0];
        let mut h = x;
        for c in &self.convs {
            let w = tape.param(&c.weight);
            let b = tape.param(&c.bias);
            h = tape.conv1d(h, w, b)?;
            h = tape.relu(h)?;
            h = tape.maxpool1d(h, self.pool)?;
        }
        let flat = tape.reshape(h, vec![batch, self.flat])?;
        let f = self.fc.forward(tape, flat)?;
        tape.relu(f)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.convs.iter().flat_map(|c| [&c.weight, &c.bias]).collect();
        out.extend(self.fc.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.convs.iter_mut().flat_map(|c| [&mut c.weight, &mut c.bias]).collect();
        out.extend(self.fc.params_mut());
        out
    }
}

/// Two-layer MLP: Dense -> ReLU -> Dense.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Dense,
    pub output: Dense,
}

impl Mlp {
    pub fn new(name: &str, inputs: usize, hidden: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Mlp {
            hidden: Dense::new(&format!("{name}.fc1"), inputs, hidden, rng),
            output: Dense::new(&format!("{name}.fc2"), hidden, outputs, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, DiffError> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h)?;
        self.output.forward(tape, h)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.hidden.params().into_iter().chain(self.output.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.hidden.params_mut().into_iter().chain(self.output.params_mut()).collect()
    }
}
