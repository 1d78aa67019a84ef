use std::sync::Arc;

use crate::diffcore::{CustomOp, NodeId, Parameter, Tape, Tensor};

use super::pav::{is_non_decreasing, isotonic_projection};
use super::LatticeError;

/// Maximum projection sweeps over all monotone dimensions.
pub const MAX_PROJECTION_SWEEPS: usize = 10;

/// Multilinearly interpolated look-up table on the unit cube.
///
/// Vertex parameters are stored row-major over the per-dimension vertex
/// counts, first dimension slowest.
#[derive(Clone, Debug)]
pub struct Lattice {
    sizes: Vec<usize>,
    pub vertices: Parameter,
    monotone: Vec<bool>,
}

impl Lattice {
    pub fn new(
        name: impl Into<String>,
        sizes: Vec<usize>,
        vertices: Vec<f64>,
        monotone: Vec<bool>,
    ) -> Result<Self, LatticeError> {
        if sizes.is_empty() || sizes.iter().any(|&s| s < 2) {
            return Err(LatticeError::Invalid(format!(
                "lattice needs at least one dimension and >= 2 vertices per dimension, got {sizes:?}"
            )));
        }
        let n: usize = sizes.iter().product();
        if vertices.len() != n {
            return Err(LatticeError::DimensionMismatch {
                what: "lattice vertices",
                expected: n,
                got: vertices.len(),
            });
        }
        if monotone.len() != sizes.len() {
            return Err(LatticeError::DimensionMismatch {
                what: "lattice monotone mask",
                expected: sizes.len(),
                got: monotone.len(),
            });
        }
        Ok(Lattice {
            vertices: Parameter::new(name, Tensor::new(vec![n], vertices)?),
            sizes,
            monotone,
        })
    }

    /// Vertex values equal to the mean of the normalized coordinates of the
    /// monotone dimensions (zero when none are monotone).
    pub fn ramp(name: impl Into<String>, sizes: Vec<usize>, monotone: Vec<bool>) -> Result<Self, LatticeError> {
        let n: usize = sizes.iter().product();
        let count = monotone.iter().filter(|&&m| m).count().max(1) as f64;
        let strides = strides(&sizes);
        let vertices = (0..n)
            .map(|flat| {
                sizes
                    .iter()
                    .zip(&strides)
                    .zip(&monotone)
                    .filter(|(_, &m)| m)
                    .map(|((&s, &st), _)| ((flat / st) % s) as f64 / (s - 1) as f64)
                    .sum::<f64>()
                    / count
            })
            .collect();
        Lattice::new(name, sizes, vertices, monotone)
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn monotone(&self) -> &[bool] {
        &self.monotone
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, LatticeError> {
        if x.len() != self.dims() {
            return Err(LatticeError::DimensionMismatch {
                what: "lattice input",
                expected: self.dims(),
                got: x.len(),
            });
        }
        let cell = Cell::locate(&self.sizes, x);
        let params = self.vertices.value.data();
        Ok(cell.corners().map(|(idx, w)| params[idx] * w).sum())
    }

    /// `x [batch, d] -> [batch, 1]` on the tape.
    pub fn apply(&self, tape: &mut Tape, x: NodeId, vertices: NodeId) -> Result<NodeId, LatticeError> {
        let xv = tape.value(x);
        let d = self.dims();
        if xv.rank() != 2 || xv.shape()[1] != d {
            return Err(LatticeError::DimensionMismatch {
                what: "lattice input width",
                expected: d,
                got: xv.shape().last().copied().unwrap_or(0),
            });
        }
        let params = tape.value(vertices).data();
        let out: Vec<f64> = xv
            .data()
            .chunks(d)
            .map(|row| {
                let cell = Cell::locate(&self.sizes, row);
                cell.corners().map(|(idx, w)| params[idx] * w).sum()
            })
            .collect();
        let rows = out.len();
        let op = LatticeOp {
            sizes: self.sizes.clone(),
        };
        Ok(tape.custom(Arc::new(op), &[x, vertices], Tensor::new(vec![rows, 1], out)?)?)
    }

    /// Whether vertex values are non-decreasing along every monotone
    /// dimension.
    pub fn is_feasible(&self) -> bool {
        let data = self.vertices.value.data();
        let strides = strides(&self.sizes);
        self.monotone.iter().enumerate().filter(|(_, &m)| m).all(|(dim, _)| {
            lines(&self.sizes, &strides, dim).all(|line| {
                let vals: Vec<f64> = line.iter().map(|&i| data[i]).collect();
                is_non_decreasing(&vals)
            })
        })
    }

    /// Restores monotonicity with per-line isotonic projections, one
    /// dimension per pass, until a sweep changes nothing. Returns the number
    /// of sweeps run.
    pub fn project_monotone(&mut self) -> usize {
        let strides = strides(&self.sizes);
        let dims: Vec<usize> = (0..self.dims()).filter(|&d| self.monotone[d]).collect();
        if dims.is_empty() {
            return 0;
        }
        let mut sweeps = 0;
        while sweeps < MAX_PROJECTION_SWEEPS {
            sweeps += 1;
            let mut changed = false;
            let data = self.vertices.value.data_mut();
            for &dim in &dims {
                for line in lines(&self.sizes, &strides, dim) {
                    let mut vals: Vec<f64> = line.iter().map(|&i| data[i]).collect();
                    if is_non_decreasing(&vals) {
                        continue;
                    }
                    isotonic_projection(&mut vals);
                    for (&i, v) in line.iter().zip(vals) {
                        data[i] = v;
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        sweeps
    }
}

fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut st = vec![1; sizes.len()];
    for d in (0..sizes.len().saturating_sub(1)).rev() {
        st[d] = st[d + 1] * sizes[d + 1];
    }
    st
}

/// Flat indices of every 1-D line of vertices along `dim`.
fn lines<'a>(sizes: &'a [usize], strides: &'a [usize], dim: usize) -> impl Iterator<Item = Vec<usize>> + 'a {
    let n: usize = sizes.iter().product();
    (0..n)
        .filter(move |flat| (flat / strides[dim]).is_multiple_of(sizes[dim]))
        .map(move |start| (0..sizes[dim]).map(|i| start + i * strides[dim]).collect())
}

/// Enclosing cell of a point: base vertex, fractional offsets, and clamp
/// flags per dimension.
struct Cell {
    base: usize,
    frac: Vec<f64>,
    scale: Vec<f64>,
    clamped: Vec<bool>,
    strides: Vec<usize>,
}

impl Cell {
    fn locate(sizes: &[usize], x: &[f64]) -> Cell {
        let strides = strides(sizes);
        let mut base = 0;
        let mut frac = Vec::with_capacity(sizes.len());
        let mut scale = Vec::with_capacity(sizes.len());
        let mut clamped = Vec::with_capacity(sizes.len());
        for (d, &s) in sizes.iter().enumerate() {
            let v = x[d];
            clamped.push(!(0.0..=1.0).contains(&v));
            let pos = v.clamp(0.0, 1.0) * (s - 1) as f64;
            let i = (pos.floor() as usize).min(s - 2);
            base += i * strides[d];
            frac.push(pos - i as f64);
            scale.push((s - 1) as f64);
        }
        Cell {
            base,
            frac,
            scale,
            clamped,
            strides,
        }
    }

    /// (flat vertex index, interpolation weight) over the 2^d corners.
    fn corners(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let d = self.frac.len();
        (0..1usize << d).map(move |mask| {
            let mut idx = self.base;
            let mut w = 1.0;
            for k in 0..d {
                if mask >> k & 1 == 1 {
                    idx += self.strides[k];
                    w *= self.frac[k];
                } else {
                    w *= 1.0 - self.frac[k];
                }
            }
            (idx, w)
        })
    }
}

#[derive(Debug)]
struct LatticeOp {
    sizes: Vec<usize>,
}

impl CustomOp for LatticeOp {
    fn name(&self) -> &'static str {
        "lattice"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (x, vertices) = (inputs[0], inputs[1]);
        let d = self.sizes.len();
        let params = vertices.data();
        let mut dx = Tensor::zeros(x.shape());
        let mut dv = Tensor::zeros(vertices.shape());
        for (r, (row, &g)) in x.data().chunks(d).zip(grad.data()).enumerate() {
            let cell = Cell::locate(&self.sizes, row);
            for mask in 0..1usize << d {
                let mut idx = cell.base;
                let mut w = 1.0;
                for k in 0..d {
                    if mask >> k & 1 == 1 {
                        idx += cell.strides[k];
                        w *= cell.frac[k];
                    } else {
                        w *= 1.0 - cell.frac[k];
                    }
                }
                dv.data_mut()[idx] += g * w;
                for k in 0..d {
                    if cell.clamped[k] {
                        continue;
                    }
                    // weight with dimension k's factor replaced by its derivative
                    let mut dw = if mask >> k & 1 == 1 { cell.scale[k] } else { -cell.scale[k] };
                    for j in 0..d {
                        if j == k {
                            continue;
                        }
                        dw *= if mask >> j & 1 == 1 { cell.frac[j] } else { 1.0 - cell.frac[j] };
                    }
                    dx.data_mut()[r * d + k] += g * params[idx] * dw;
                }
            }
        }
        vec![dx, dv]
    }
}
