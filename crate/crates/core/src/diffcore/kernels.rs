//! Forward and pullback kernels for the built-in primitives.
//!
//! Every function here is pure: it reads input tensors and returns freshly
//! allocated outputs. The tape owns sequencing and bookkeeping.

use super::{DiffError, Tensor};

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    let (m, k) = dims2("matmul", a)?;
    let (k2, n) = dims2("matmul", b)?;
    if k != k2 {
        return Err(DiffError::shape(
            "matmul",
            format!("inner dimensions differ: {:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(vec![m, n], out)
}

/// `out += a[m,k] * b[k,n]`
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

pub(crate) fn matmul_backward(a: &Tensor, b: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    // dA = G * B^T
    let mut da = vec![0.0; m * k];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    // dB = A^T * G
    let mut db = vec![0.0; k * n];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let drow = &mut db[p * n..(p + 1) * n];
            for (d, &gv) in drow.iter_mut().zip(grow) {
                *d += aip * gv;
            }
        }
    }
    (
        Tensor::new(vec![m, k], da).expect("shape"),
        Tensor::new(vec![k, n], db).expect("shape"),
    )
}

pub(crate) struct ConvDims {
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    out_len: usize,
}

pub(crate) fn conv1d_dims(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
) -> Result<ConvDims, DiffError> {
    if x.rank() != 3 || w.rank() != 3 {
        return Err(DiffError::shape(
            "conv1d",
            format!(
                "expected input [batch, channels, length] and kernel [out, in, width], got {:?} and {:?}",
                x.shape(),
                w.shape()
            ),
        ));
    }
    let (batch, c_in, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, c_in_w, kernel) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if c_in != c_in_w {
        return Err(DiffError::shape(
            "conv1d",
            format!("input has {c_in} channels, kernel expects {c_in_w}"),
        ));
    }
    if stride == 0 {
        return Err(DiffError::shape("conv1d", "stride must be positive".into()));
    }
    if kernel == 0 || kernel > len {
        return Err(DiffError::shape(
            "conv1d",
            format!("kernel width {kernel} does not fit input length {len}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(DiffError::shape(
                "conv1d",
                format!("bias shape {:?}, expected [{c_out}]", b.shape()),
            ));
        }
    }
    Ok(ConvDims {
        batch,
        c_in,
        len,
        c_out,
        kernel,
        stride,
        out_len: (len - kernel) / stride + 1,
    })
}

pub(crate) fn conv1d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, d: &ConvDims) -> Tensor {
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![0.0; d.batch * d.c_out * d.out_len];
    for b in 0..d.batch {
        for co in 0..d.c_out {
            let orow = &mut out[(b * d.c_out + co) * d.out_len..(b * d.c_out + co + 1) * d.out_len];
            if let Some(bias) = bias {
                orow.fill(bias.data()[co]);
            }
            for ci in 0..d.c_in {
                let xrow = &xd[(b * d.c_in + ci) * d.len..(b * d.c_in + ci + 1) * d.len];
                for j in 0..d.kernel {
                    let wv = wd[(co * d.c_in + ci) * d.kernel + j];
                    if d.stride == 1 {
                        for (o, &xv) in orow.iter_mut().zip(&xrow[j..j + d.out_len]) {
                            *o += wv * xv;
                        }
                    } else {
                        for (t, o) in orow.iter_mut().enumerate() {
                            *o += wv * xrow[t * d.stride + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![d.batch, d.c_out, d.out_len], out).expect("shape")
}

/// Returns (dx, dw, dbias).
pub(crate) fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    d: &ConvDims,
) -> (Tensor, Tensor, Tensor) {
    let (xd, wd, gd) = (x.data(), w.data(), g.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut dbias = vec![0.0; d.c_out];
    for b in 0..d.batch {
        for co in 0..d.c_out {
            let grow = &gd[(b * d.c_out + co) * d.out_len..(b * d.c_out + co + 1) * d.out_len];
            dbias[co] += grow.iter().sum::<f64>();
            for ci in 0..d.c_in {
                let base = (b * d.c_in + ci) * d.len;
                for j in 0..d.kernel {
                    let widx = (co * d.c_in + ci) * d.kernel + j;
                    let wv = wd[widx];
                    let mut acc = 0.0;
                    if d.stride == 1 {
                        let xrow = &xd[base + j..base + j + d.out_len];
                        let dxrow = &mut dx[base + j..base + j + d.out_len];
                        for ((dxv, &xv), &gv) in dxrow.iter_mut().zip(xrow).zip(grow) {
                            *dxv += wv * gv;
                            acc += xv * gv;
                        }
                    } else {
                        for (t, &gv) in grow.iter().enumerate() {
                            let xi = base + t * d.stride + j;
                            dx[xi] += wv * gv;
                            acc += xd[xi] * gv;
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("shape"),
        Tensor::new(w.shape().to_vec(), dw).expect("shape"),
        Tensor::vector(dbias),
    )
}

/// Non-overlapping max pooling over the last axis. Returns output and the
/// flat input index chosen for every output element (first index on ties).
pub(crate) fn maxpool1d(x: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>), DiffError> {
    if x.rank() != 3 {
        return Err(DiffError::shape(
            "maxpool1d",
            format!("expected [batch, channels, length], got {:?}", x.shape()),
        ));
    }
    let (batch, ch, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if size == 0 || size > len {
        return Err(DiffError::shape(
            "maxpool1d",
            format!("window {size} does not fit length {len}"),
        ));
    }
    let out_len = len / size;
    let xd = x.data();
    let mut out = Vec::with_capacity(batch * ch * out_len);
    let mut arg = Vec::with_capacity(batch * ch * out_len);
    for row in 0..batch * ch {
        let base = row * len;
        for t in 0..out_len {
            let start = base + t * size;
            let mut best = start;
            for i in start + 1..start + size {
                if !xd[best].is_nan() && (xd[i] > xd[best] || xd[i].is_nan()) {
                    best = i;
                }
            }
            out.push(xd[best]);
            arg.push(best);
        }
    }
    Ok((Tensor::new(vec![batch, ch, out_len], out)?, arg))
}

pub(crate) fn softmax_last(x: &Tensor) -> Tensor {
    let cols = *x.shape().last().unwrap_or(&1);
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(cols.max(1)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("shape")
}

pub(crate) fn softmax_last_backward(y: &Tensor, g: &Tensor) -> Tensor {
    let cols = *y.shape().last().unwrap_or(&1);
    let mut out = vec![0.0; y.len()];
    for ((o, yr), gr) in out
        .chunks_mut(cols)
        .zip(y.data().chunks(cols))
        .zip(g.data().chunks(cols))
    {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for i in 0..cols {
            o[i] = yr[i] * (gr[i] - dot);
        }
    }
    Tensor::new(y.shape().to_vec(), out).expect("shape")
}

/// Per-row cross-entropy of softmax(logits) against integer targets.
/// Returns the loss vector and the row-wise probabilities.
pub(crate) fn softmax_cross_entropy(
    logits: &Tensor,
    targets: &[usize],
) -> Result<(Tensor, Tensor), DiffError> {
    let (rows, cols) = match logits.shape() {
        [c] => (1, *c),
        [r, c] => (*r, *c),
        s => {
            return Err(DiffError::shape(
                "softmax_cross_entropy",
                format!("logits must be [classes] or [batch, classes], got {s:?}"),
            ))
        }
    };
    if targets.len() != rows {
        return Err(DiffError::shape(
            "softmax_cross_entropy",
            format!("{} targets for {rows} rows", targets.len()),
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= cols) {
        return Err(DiffError::shape(
            "softmax_cross_entropy",
            format!("target class {t} out of range for {cols} classes"),
        ));
    }
    let mut losses = Vec::with_capacity(rows);
    let mut probs = Vec::with_capacity(rows * cols);
    for (row, &t) in logits.data().chunks(cols).zip(targets) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        losses.push(lse - row[t]);
        probs.extend(row.iter().map(|v| (v - lse).exp()));
    }
    Ok((
        Tensor::vector(losses),
        Tensor::new(logits.shape().to_vec(), probs)?,
    ))
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else if v < -30.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

/// Output shape and per-input flat index maps for numpy-style broadcasting.
pub(crate) struct Broadcast {
    pub shape: Vec<usize>,
    pub a_index: Vec<usize>,
    pub b_index: Vec<usize>,
}

pub(crate) fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast, DiffError> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| -> Vec<usize> {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut shape = Vec::with_capacity(rank);
    for (&da, &db) in pa.iter().zip(&pb) {
        if da == db || db == 1 {
            shape.push(da);
        } else if da == 1 {
            shape.push(db);
        } else {
            return Err(DiffError::shape(
                op,
                format!("cannot broadcast {a:?} with {b:?}"),
            ));
        }
    }
    let strides = |p: &[usize]| -> Vec<usize> {
        let mut st = vec![0; rank];
        let mut acc = 1;
        for i in (0..rank).rev() {
            st[i] = if p[i] == 1 { 0 } else { acc };
            acc *= p[i];
        }
        st
    };
    let (sa, sb) = (strides(&pa), strides(&pb));
    let n: usize = shape.iter().product();
    let mut a_index = Vec::with_capacity(n);
    let mut b_index = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    for _ in 0..n {
        a_index.push(idx.iter().zip(&sa).map(|(i, s)| i * s).sum());
        b_index.push(idx.iter().zip(&sb).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Broadcast {
        shape,
        a_index,
        b_index,
    })
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize), DiffError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(DiffError::shape(op, format!("expected a matrix, got {s:?}"))),
    }
}
