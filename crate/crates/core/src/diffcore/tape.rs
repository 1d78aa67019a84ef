use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::kernels::{self, ConvDims};
use super::{DiffError, Parameter, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    index: u32,
    generation: u32,
}

impl NodeId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Primitive operations understood by [`Tape::forward`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `[m,k] x [k,n]`.
    MatMul,
    /// Inputs `x [batch, c_in, len]`, `w [c_out, c_in, width]`, optional `bias [c_out]`.
    /// Valid padding.
    Conv1d { stride: usize },
    /// Non-overlapping window over the last axis.
    MaxPool1d { size: usize },
    Relu,
    Sigmoid,
    /// Over the last axis.
    Softmax,
    Exp,
    Square,
    Neg,
    Softplus,
    /// Multiply by a constant.
    Scale(f64),
    /// Broadcasting elementwise sum.
    Add,
    /// Broadcasting elementwise product.
    Mul,
    Concat { axis: usize },
    Reshape { shape: Vec<usize> },
    Slice { axis: usize, start: usize, len: usize },
    /// Mean of all elements, yields a scalar.
    Mean,
    /// Sum of all elements, yields a scalar.
    Sum,
    /// Fused log-softmax + negative log-likelihood, one loss per row.
    SoftmaxCrossEntropy { targets: Vec<usize> },
    /// Identity forward, zero pullback.
    StopGradient,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Conv1d { .. } => "conv1d",
            OpKind::MaxPool1d { .. } => "maxpool1d",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::Exp => "exp",
            OpKind::Square => "square",
            OpKind::Neg => "neg",
            OpKind::Softplus => "softplus",
            OpKind::Scale(_) => "scale",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Concat { .. } => "concat",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Slice { .. } => "slice",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            OpKind::StopGradient => "stop_gradient",
        }
    }
}

/// Operation defined outside this module (e.g. lattice interpolation).
///
/// The caller computes the forward value; the tape only needs the pullback.
pub trait CustomOp: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Gradient with respect to each input, in input order.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug)]
enum Saved {
    None,
    Conv(ConvDims),
    PoolArgmax(Vec<usize>),
    Probs(Tensor),
    Custom(Arc<dyn CustomOp>),
}

impl fmt::Debug for ConvDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ConvDims")
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Option<OpKind>,
    inputs: Vec<usize>,
    saved: Saved,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    generation: u32,
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node. Ids handed out before the reset become stale.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.generation = self.generation.wrapping_add(1);
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, None, vec![], Saved::None)
    }

    /// Records a trainable parameter; its gradient is reported under the
    /// parameter's name.
    pub fn param(&mut self, p: &Parameter) -> NodeId {
        let id = self.leaf(p.value.clone());
        self.params.push((p.name().to_string(), id.index()));
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.index()].value
    }

    pub fn check(&self, id: NodeId) -> Result<(), DiffError> {
        if id.generation != self.generation || id.index() >= self.nodes.len() {
            return Err(DiffError::StaleNode {
                index: id.index(),
                node_generation: id.generation,
                tape_generation: self.generation,
            });
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Option<OpKind>, inputs: Vec<usize>, saved: Saved) -> NodeId {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            inputs,
            saved,
        });
        NodeId {
            index,
            generation: self.generation,
        }
    }

    /// Evaluates `op` on recorded inputs and records the result.
    pub fn forward(&mut self, op: OpKind, inputs: &[NodeId]) -> Result<NodeId, DiffError> {
        for &id in inputs {
            self.check(id)?;
        }
        let name = op.name();
        let arity = match &op {
            OpKind::MatMul | OpKind::Add | OpKind::Mul => 2..=2,
            OpKind::Conv1d { .. } => 2..=3,
            OpKind::Concat { .. } => 1..=usize::MAX,
            _ => 1..=1,
        };
        if !arity.contains(&inputs.len()) {
            return Err(DiffError::shape(
                name,
                format!("takes {:?} inputs, got {}", arity, inputs.len()),
            ));
        }
        let vals: Vec<&Tensor> = inputs.iter().map(|id| self.value(*id)).collect();
        if let Some(empty) = vals.iter().find(|v| v.is_empty()) {
            return Err(DiffError::Empty {
                op: name,
                shape: empty.shape().to_vec(),
            });
        }
        let x = vals[0];
        let mut saved = Saved::None;
        let value = match &op {
            OpKind::MatMul => kernels::matmul(x, vals[1])?,
            OpKind::Conv1d { stride } => {
                let dims = kernels::conv1d_dims(x, vals[1], vals.get(2).copied(), *stride)?;
                let out = kernels::conv1d(x, vals[1], vals.get(2).copied(), &dims);
                saved = Saved::Conv(dims);
                out
            }
            OpKind::MaxPool1d { size } => {
                let (out, arg) = kernels::maxpool1d(x, *size)?;
                saved = Saved::PoolArgmax(arg);
                out
            }
            OpKind::Relu => x.map(|v| if v < 0.0 { 0.0 } else { v }),
            OpKind::Sigmoid => x.map(kernels::sigmoid),
            OpKind::Softmax => kernels::softmax_last(x),
            OpKind::Exp => x.map(f64::exp),
            OpKind::Square => x.map(|v| v * v),
            OpKind::Neg => x.map(|v| -v),
            OpKind::Softplus => x.map(kernels::softplus),
            OpKind::Scale(c) => x.map(|v| v * c),
            OpKind::Add | OpKind::Mul => {
                let y = vals[1];
                if x.shape() == y.shape() {
                    let data = x
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(a, b)| if op == OpKind::Add { a + b } else { a * b })
                        .collect();
                    Tensor::new(x.shape().to_vec(), data)?
                } else {
                    let bc = kernels::broadcast(name, x.shape(), y.shape())?;
                    let (xd, yd) = (x.data(), y.data());
                    let data = bc
                        .a_index
                        .iter()
                        .zip(&bc.b_index)
                        .map(|(&i, &j)| if op == OpKind::Add { xd[i] + yd[j] } else { xd[i] * yd[j] })
                        .collect();
                    Tensor::new(bc.shape, data)?
                }
            }
            OpKind::Concat { axis } => concat(&vals, *axis)?,
            OpKind::Reshape { shape } => x.clone().reshape(shape.clone())?,
            OpKind::Slice { axis, start, len } => slice(x, *axis, *start, *len)?,
            OpKind::Mean => Tensor::scalar(x.sum() / x.len() as f64),
            OpKind::Sum => Tensor::scalar(x.sum()),
            OpKind::SoftmaxCrossEntropy { targets } => {
                let (loss, probs) = kernels::softmax_cross_entropy(x, targets)?;
                saved = Saved::Probs(probs);
                loss
            }
            OpKind::StopGradient => x.clone(),
        };
        let inputs = inputs.iter().map(|id| id.index()).collect();
        Ok(self.push(value, Some(op), inputs, saved))
    }

    /// Records the result of an externally computed operation.
    pub fn custom(
        &mut self,
        op: Arc<dyn CustomOp>,
        inputs: &[NodeId],
        output: Tensor,
    ) -> Result<NodeId, DiffError> {
        for &id in inputs {
            self.check(id)?;
        }
        let inputs = inputs.iter().map(|id| id.index()).collect();
        Ok(self.push(output, None, inputs, Saved::Custom(op)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::MatMul, &[a, b])
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, bias: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Conv1d { stride: 1 }, &[x, w, bias])
    }

    pub fn maxpool1d(&mut self, x: NodeId, size: usize) -> Result<NodeId, DiffError> {
        self.forward(OpKind::MaxPool1d { size }, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Relu, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Softmax, &[x])
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Exp, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Square, &[x])
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Neg, &[x])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Scale(c), &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Mul, &[a, b])
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Concat { axis }, xs)
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Reshape { shape }, &[x])
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Slice { axis, start, len }, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Mean, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::Sum, &[x])
    }

    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, DiffError> {
        self.forward(
            OpKind::SoftmaxCrossEntropy {
                targets: targets.to_vec(),
            },
            &[logits],
        )
    }

    pub fn stop_gradient(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.forward(OpKind::StopGradient, &[x])
    }

    /// Reverse sweep from a scalar `loss`, visiting each recorded node once.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, DiffError> {
        self.check(loss)?;
        let root = &self.nodes[loss.index()];
        if root.value.len() != 1 {
            return Err(DiffError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.index() + 1];
        grads[loss.index()] = Some(Tensor::full(root.value.shape(), 1.0));
        for idx in (0..=loss.index()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let pullbacks = self.pullback(node, &inputs, &g);
            for (&i, pb) in node.inputs.iter().zip(pullbacks) {
                let Some(pb) = pb else { continue };
                match &mut grads[i] {
                    Some(acc) => acc.add_assign(&pb),
                    slot => *slot = Some(pb),
                }
            }
            grads[idx] = Some(g);
        }
        let mut params: HashMap<String, Tensor> = HashMap::new();
        for (name, idx) in &self.params {
            if let Some(Some(g)) = grads.get(*idx) {
                match params.get_mut(name) {
                    Some(acc) => acc.add_assign(g),
                    None => {
                        params.insert(name.clone(), g.clone());
                    }
                }
            }
        }
        Ok(Gradients {
            generation: self.generation,
            grads,
            params,
        })
    }

    fn pullback(&self, node: &Node, inputs: &[&Tensor], g: &Tensor) -> Vec<Option<Tensor>> {
        let y = &node.value;
        let Some(op) = &node.op else {
            return match &node.saved {
                Saved::Custom(op) => op.backward(inputs, y, g).into_iter().map(Some).collect(),
                _ => vec![],
            };
        };
        let x = inputs[0];
        let zip = |f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            let data = x
                .data()
                .iter()
                .zip(y.data())
                .zip(g.data())
                .map(|((&xv, &yv), &gv)| f(xv, yv, gv))
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("shape")
        };
        match op {
            OpKind::MatMul => {
                let (da, db) = kernels::matmul_backward(x, inputs[1], g);
                vec![Some(da), Some(db)]
            }
            OpKind::Conv1d { .. } => {
                let Saved::Conv(dims) = &node.saved else { unreachable!() };
                let (dx, dw, db) = kernels::conv1d_backward(x, inputs[1], g, dims);
                let mut out = vec![Some(dx), Some(dw)];
                if inputs.len() == 3 {
                    out.push(Some(db));
                }
                out
            }
            OpKind::MaxPool1d { .. } => {
                let Saved::PoolArgmax(arg) = &node.saved else { unreachable!() };
                let mut dx = Tensor::zeros(x.shape());
                for (&src, &gv) in arg.iter().zip(g.data()) {
                    dx.data_mut()[src] += gv;
                }
                vec![Some(dx)]
            }
            OpKind::Relu => vec![Some(zip(&|xv, _, gv| if xv > 0.0 { gv } else { 0.0 }))],
            OpKind::Sigmoid => vec![Some(zip(&|_, yv, gv| gv * yv * (1.0 - yv)))],
            OpKind::Softmax => vec![Some(kernels::softmax_last_backward(y, g))],
            OpKind::Exp => vec![Some(zip(&|_, yv, gv| gv * yv))],
            OpKind::Square => vec![Some(zip(&|xv, _, gv| 2.0 * xv * gv))],
            OpKind::Neg => vec![Some(g.map(|v| -v))],
            OpKind::Softplus => vec![Some(zip(&|xv, _, gv| gv * kernels::sigmoid(xv)))],
            OpKind::Scale(c) => vec![Some(g.map(|v| v * c))],
            OpKind::Add | OpKind::Mul => {
                let b = inputs[1];
                let is_mul = *op == OpKind::Mul;
                if x.shape() == b.shape() {
                    if !is_mul {
                        return vec![Some(g.clone()), Some(g.clone())];
                    }
                    let da = g.data().iter().zip(b.data()).map(|(gv, bv)| gv * bv).collect();
                    let db = g.data().iter().zip(x.data()).map(|(gv, av)| gv * av).collect();
                    return vec![
                        Some(Tensor::new(x.shape().to_vec(), da).expect("shape")),
                        Some(Tensor::new(b.shape().to_vec(), db).expect("shape")),
                    ];
                }
                let bc = kernels::broadcast("broadcast", x.shape(), b.shape()).expect("checked in forward");
                let mut da = Tensor::zeros(x.shape());
                let mut db = Tensor::zeros(b.shape());
                for ((&i, &j), &gv) in bc.a_index.iter().zip(&bc.b_index).zip(g.data()) {
                    if is_mul {
                        da.data_mut()[i] += gv * b.data()[j];
                        db.data_mut()[j] += gv * x.data()[i];
                    } else {
                        da.data_mut()[i] += gv;
                        db.data_mut()[j] += gv;
                    }
                }
                vec![Some(da), Some(db)]
            }
            OpKind::Concat { axis } => {
                let mut start = 0;
                inputs
                    .iter()
                    .map(|t| {
                        let len = t.shape()[*axis];
                        let piece = slice(g, *axis, start, len).expect("checked in forward");
                        start += len;
                        Some(piece)
                    })
                    .collect()
            }
            OpKind::Reshape { .. } => {
                vec![Some(g.clone().reshape(x.shape().to_vec()).expect("shape"))]
            }
            OpKind::Slice { axis, start, .. } => {
                let mut dx = Tensor::zeros(x.shape());
                let (outer, inner) = split_axis(x.shape(), *axis);
                let (full, part) = (x.shape()[*axis], g.shape()[*axis]);
                for o in 0..outer {
                    let src = &g.data()[o * part * inner..(o + 1) * part * inner];
                    let dst_start = (o * full + start) * inner;
                    dx.data_mut()[dst_start..dst_start + part * inner].copy_from_slice(src);
                }
                vec![Some(dx)]
            }
            OpKind::Mean => {
                let gv = g.data()[0] / x.len() as f64;
                vec![Some(Tensor::full(x.shape(), gv))]
            }
            OpKind::Sum => vec![Some(Tensor::full(x.shape(), g.data()[0]))],
            OpKind::SoftmaxCrossEntropy { targets } => {
                let Saved::Probs(probs) = &node.saved else { unreachable!() };
                let cols = *x.shape().last().expect("rank checked");
                let mut dx = probs.clone();
                for (r, (&t, &gv)) in targets.iter().zip(g.data()).enumerate() {
                    let row = &mut dx.data_mut()[r * cols..(r + 1) * cols];
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= gv);
                }
                vec![Some(dx)]
            }
            OpKind::StopGradient => vec![None],
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    generation: u32,
    grads: Vec<Option<Tensor>>,
    params: HashMap<String, Tensor>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded node; `None` when the
    /// node does not influence the loss.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        if id.generation != self.generation {
            return None;
        }
        self.grads.get(id.index()).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Adds the gradient of every parameter that was recorded into its
    /// accumulator.
    pub fn accumulate<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) {
        for p in params {
            if let Some(g) = self.params.get(p.name()) {
                p.grad.add_assign(g);
            }
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
}

fn concat(vals: &[&Tensor], axis: usize) -> Result<Tensor, DiffError> {
    let first = vals[0].shape();
    if axis >= first.len() {
        return Err(DiffError::shape(
            "concat",
            format!("axis {axis} out of range for {first:?}"),
        ));
    }
    for v in &vals[1..] {
        let s = v.shape();
        let ok = s.len() == first.len()
            && s.iter().zip(first).enumerate().all(|(d, (a, b))| d == axis || a == b);
        if !ok {
            return Err(DiffError::shape(
                "concat",
                format!("cannot join {first:?} and {s:?} along axis {axis}"),
            ));
        }
    }
    let (outer, inner) = split_axis(first, axis);
    let total: usize = vals.iter().map(|v| v.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for v in vals {
            let w = v.shape()[axis] * inner;
            data.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.to_vec();
    shape[axis] = total;
    Tensor::new(shape, data)
}

fn slice(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor, DiffError> {
    let shape = x.shape();
    if axis >= shape.len() || len == 0 || start + len > shape[axis] {
        return Err(DiffError::shape(
            "slice",
            format!("[{start}, {}) along axis {axis} of {shape:?}", start + len),
        ));
    }
    let (outer, inner) = split_axis(shape, axis);
    let full = shape[axis];
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let from = (o * full + start) * inner;
        data.extend_from_slice(&x.data()[from..from + len * inner]);
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    Tensor::new(out_shape, data)
}
