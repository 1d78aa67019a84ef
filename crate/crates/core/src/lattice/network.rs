use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, Parameter, Tape};

use super::{Calibrator, Lattice, LatticeError, LinearEmbedding};

/// Shape of each per-output subnetwork.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    /// Keypoints of every calibrator, spread uniformly over [0, 1].
    pub keypoints: usize,
    /// Width of the linear embedding; `None` means `min(K, 3)`.
    pub embed_dim: Option<usize>,
    pub vertices_per_dim: usize,
    /// Half-width of the uniform jitter added to the averaging embedding,
    /// relative to `1/K`.
    pub init_noise: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            keypoints: 5,
            embed_dim: None,
            vertices_per_dim: 2,
            init_noise: 0.1,
        }
    }
}

impl LatticeConfig {
    pub fn embed_width(&self, k: usize) -> usize {
        self.embed_dim.unwrap_or(k.min(3)).max(1)
    }
}

/// Calibrators -> linear embedding -> calibrators -> lattice, monotone along
/// the path from input `k` to its output.
#[derive(Clone, Debug)]
pub struct Subnetwork {
    pub input_calibrators: Vec<Calibrator>,
    pub embedding: LinearEmbedding,
    pub hidden_calibrators: Vec<Calibrator>,
    pub lattice: Lattice,
}

/// `K` independent subnetworks mapping transformed auxiliary losses to raw
/// fusion targets; output `k` is non-decreasing in input `k`.
#[derive(Clone, Debug)]
pub struct LatticeNetwork {
    k: usize,
    config: LatticeConfig,
    subnets: Vec<Subnetwork>,
}

impl LatticeNetwork {
    pub fn new(prefix: &str, k: usize, config: &LatticeConfig, seed: u64) -> Result<Self, LatticeError> {
        if k == 0 {
            return Err(LatticeError::Invalid("lattice network needs K >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embed_width(k);
        let base = 1.0 / k as f64;
        let jitter = config.init_noise.abs() * base;
        let mut subnets = Vec::with_capacity(k);
        for out in 0..k {
            let name = format!("{prefix}.{out}");
            let input_calibrators = (0..k)
                .map(|j| Calibrator::identity(format!("{name}.cal_in.{j}"), config.keypoints, j == out))
                .collect::<Result<Vec<_>, _>>()?;
            let weights: Vec<f64> = (0..d * k)
                .map(|_| {
                    if jitter > 0.0 {
                        base + rng.random_range(-jitter..jitter)
                    } else {
                        base
                    }
                })
                .collect();
            let mask: Vec<bool> = (0..k).map(|j| j == out).collect();
            let embedding =
                LinearEmbedding::from_effective(&format!("{name}.embed"), d, k, &weights, vec![0.0; d], mask)?;
            let hidden_calibrators = (0..d)
                .map(|j| Calibrator::identity(format!("{name}.cal_hid.{j}"), config.keypoints, true))
                .collect::<Result<Vec<_>, _>>()?;
            let lattice = Lattice::ramp(format!("{name}.lattice"), vec![config.vertices_per_dim; d], vec![true; d])?;
            subnets.push(Subnetwork {
                input_calibrators,
                embedding,
                hidden_calibrators,
                lattice,
            });
        }
        Ok(LatticeNetwork {
            k,
            config: config.clone(),
            subnets,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn subnets(&self) -> &[Subnetwork] {
        &self.subnets
    }

    pub fn subnets_mut(&mut self) -> &mut [Subnetwork] {
        &mut self.subnets
    }

    /// Whether every path from input `k` to output `k` is monotone, so the
    /// output cannot decrease when input `k` grows.
    pub fn is_monotone_in(&self, k: usize) -> bool {
        let Some(s) = self.subnets.get(k) else { return false };
        s.input_calibrators[k].is_monotone()
            && s.embedding.monotone_inputs()[k]
            && s.hidden_calibrators.iter().all(|c| c.is_monotone())
            && s.lattice.monotone().iter().all(|&m| m)
    }

    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>, LatticeError> {
        if u.len() != self.k {
            return Err(LatticeError::DimensionMismatch {
                what: "lattice network input",
                expected: self.k,
                got: u.len(),
            });
        }
        self.subnets
            .iter()
            .map(|s| {
                let cal: Vec<f64> = s.input_calibrators.iter().zip(u).map(|(c, &x)| c.eval(x)).collect();
                let emb = s.embedding.eval(&cal)?;
                let hid: Vec<f64> = s.hidden_calibrators.iter().zip(&emb).map(|(c, &x)| c.eval(x)).collect();
                s.lattice.eval(&hid)
            })
            .collect()
    }

    /// `u [batch, K] -> [batch, K]` on the tape.
    pub fn forward(&self, tape: &mut Tape, u: NodeId) -> Result<NodeId, LatticeError> {
        let shape = tape.value(u).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.k {
            return Err(LatticeError::DimensionMismatch {
                what: "lattice network input width",
                expected: self.k,
                got: shape.last().copied().unwrap_or(0),
            });
        }
        let mut outputs = Vec::with_capacity(self.k);
        for s in &self.subnets {
            let mut cols = Vec::with_capacity(self.k);
            for (j, c) in s.input_calibrators.iter().enumerate() {
                let x = tape.slice(u, 1, j, 1)?;
                let raw = tape.param(&c.raw);
                cols.push(c.apply(tape, x, raw)?);
            }
            let cal = tape.concat(&cols, 1)?;
            let w = tape.param(&s.embedding.raw_weight);
            let b = tape.param(&s.embedding.bias);
            let emb = s.embedding.apply(tape, cal, w, b)?;
            let mut hidden = Vec::with_capacity(s.hidden_calibrators.len());
            for (j, c) in s.hidden_calibrators.iter().enumerate() {
                let x = tape.slice(emb, 1, j, 1)?;
                let raw = tape.param(&c.raw);
                hidden.push(c.apply(tape, x, raw)?);
            }
            let hid = tape.concat(&hidden, 1)?;
            let v = tape.param(&s.lattice.vertices);
            outputs.push(s.lattice.apply(tape, hid, v)?);
        }
        Ok(tape.concat(&outputs, 1)?)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for s in &self.subnets {
            out.extend(s.input_calibrators.iter().map(|c| &c.raw));
            out.push(&s.embedding.raw_weight);
            out.push(&s.embedding.bias);
            out.extend(s.hidden_calibrators.iter().map(|c| &c.raw));
            out.push(&s.lattice.vertices);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for s in &mut self.subnets {
            out.extend(s.input_calibrators.iter_mut().map(|c| &mut c.raw));
            out.push(&mut s.embedding.raw_weight);
            out.push(&mut s.embedding.bias);
            out.extend(s.hidden_calibrators.iter_mut().map(|c| &mut c.raw));
            out.push(&mut s.lattice.vertices);
        }
        out
    }

    /// Projects every lattice back onto its monotone set.
    pub fn project(&mut self) {
        for s in &mut self.subnets {
            s.lattice.project_monotone();
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.subnets.iter().all(|s| s.lattice.is_feasible())
    }
}
