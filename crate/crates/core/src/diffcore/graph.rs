use std::borrow::Cow;

use rand::Rng;

use super::tensor::{gemm, Tensor};
use super::DiffError;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run tape. Nodes are appended in execution order, which is also a
/// topological order, so the backward sweep is a single reverse scan.
///
/// Leaves may borrow their values (see [`Graph::leaf_ref`]), so model
/// parameters need not be copied onto every tape.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every `requires_grad` leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<(), DiffError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(DiffError::NonFinite { op })
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize), DiffError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(DiffError::NotMatrix {
            op,
            shape: s.to_vec(),
        }),
    }
}

fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: &'static str, value: Tensor, kind: Op, inputs: &[Var]) -> Result<Var, DiffError> {
        check_finite(op, &value)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: kind,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a leaf. Gradients are produced only for leaves with
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var, DiffError> {
        check_finite("leaf", &value)?;
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Like [`Graph::leaf`] but borrows the value instead of taking it.
    pub fn leaf_ref(&mut self, value: &'a Tensor, requires_grad: bool) -> Result<Var, DiffError> {
        check_finite("leaf", value)?;
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var, DiffError> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, DiffError> {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = require_matrix("matmul", ta)?;
        let (k2, n) = require_matrix("matmul", tb)?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        let value = Tensor::matrix(m, n, out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, DiffError> {
        let (tx, tr) = (self.value(x), self.value(row));
        let cols = tx.cols();
        if tr.len() != cols {
            return Err(mismatch("add_row", tx, tr));
        }
        let mut data = tx.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (d, r) in chunk.iter_mut().zip(tr.data()) {
                *d += r;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("add_row", value, Op::AddRow(x, row), &[x, row])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, DiffError> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("scale", value, Op::Scale(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, DiffError> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("relu", value, Op::Relu(x), &[x])
    }

    /// Softmax along `axis`. The last axis is native; axis 0 of a matrix is
    /// handled by transposition.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, DiffError> {
        let ndim = self.value(x).ndim();
        if axis + 1 == ndim {
            self.softmax_last(x)
        } else if ndim == 2 && axis == 0 {
            let t = self.transpose(x)?;
            let s = self.softmax_last(t)?;
            self.transpose(s)
        } else {
            Err(DiffError::InvalidAxis { axis, ndim })
        }
    }

    fn softmax_last(&mut self, x: Var) -> Result<Var, DiffError> {
        let tx = self.value(x);
        let data = softmax_rows(tx.data(), tx.cols());
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("softmax", value, Op::Softmax(x), &[x])
    }

    /// Row-wise layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, DiffError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let cols = tx.cols();
        if tg.len() != cols {
            return Err(mismatch("layer_norm", tx, tg));
        }
        if tb.len() != cols {
            return Err(mismatch("layer_norm", tx, tb));
        }
        let mut xhat = vec![0.0; tx.len()];
        let mut inv_std = Vec::with_capacity(tx.rows());
        let mut out = vec![0.0; tx.len()];
        for ((src, xh), dst) in tx.data().chunks(cols).zip(xhat.chunks_mut(cols)).zip(out.chunks_mut(cols)) {
            let mean = src.iter().sum::<f64>() / cols as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..cols {
                xh[j] = (src[j] - mean) * is;
                dst[j] = xh[j] * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// `x · w + b` with `w` stored as `in×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, DiffError> {
        let tx = self.value(x);
        let (r, c) = require_matrix("transpose", tx)?;
        let src = tx.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::matrix(c, r, out)?;
        self.push("transpose", value, Op::Transpose(x), &[x])
    }

    /// Concatenation along `axis` (0 = rows, 1 = columns) of matrices.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, DiffError> {
        match axis {
            0 => self.concat_rows(parts),
            1 => self.concat_cols(parts),
            _ => Err(DiffError::InvalidAxis { axis, ndim: 2 }),
        }
    }

    fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = *parts.first().ok_or(DiffError::EmptyInput { op: "concat" })?;
        let (rows, _) = require_matrix("concat", self.value(first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            let (r, c) = require_matrix("concat", t)?;
            if r != rows {
                return Err(mismatch("concat", self.value(first), t));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::matrix(rows, total, out)?;
        self.push("concat", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = *parts.first().ok_or(DiffError::EmptyInput { op: "concat" })?;
        let (_, cols) = require_matrix("concat", self.value(first))?;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            let (r, c) = require_matrix("concat", t)?;
            if c != cols {
                return Err(mismatch("concat", self.value(first), t));
            }
            rows += r;
            out.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, out)?;
        self.push("concat", value, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let tx = self.value(x);
        let (r, c) = require_matrix("slice_cols", tx)?;
        if start >= end || end > c {
            return Err(DiffError::SliceOutOfRange { start, end, len: c });
        }
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&tx.row(i)[start..end]);
        }
        let value = Tensor::matrix(r, end - start, out)?;
        self.push("slice_cols", value, Op::SliceCols(x, start), &[x])
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let tx = self.value(x);
        let (r, c) = require_matrix("slice_rows", tx)?;
        if start >= end || end > r {
            return Err(DiffError::SliceOutOfRange { start, end, len: r });
        }
        let value = Tensor::matrix(end - start, c, tx.data()[start * c..end * c].to_vec())?;
        self.push("slice_rows", value, Op::SliceRows(x, start), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, DiffError> {
        let total = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// `-log softmax(logits)[target]`, evaluated as `logsumexp(logits) - logits[target]`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, DiffError> {
        let tl = self.value(logits);
        if tl.rows() != 1 {
            return Err(DiffError::NotScalar {
                shape: tl.shape().to_vec(),
            });
        }
        let n = tl.len();
        if target >= n {
            return Err(DiffError::IndexOutOfRange { index: target, len: n });
        }
        let d = tl.data();
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + d.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let probs = softmax_rows(d, n);
        let loss = lse - d[target];
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, target, probs },
            &[logits],
        )
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var, DiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(DiffError::InvalidRate { rate });
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let tx = self.value(x);
        let mask: Vec<f64> = (0..tx.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("dropout", value, Op::Dropout(x, mask), &[x])
    }

    /// Reverse sweep from a scalar. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, DiffError> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(DiffError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            for (input, contrib) in self.local_grads(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let mut out: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                check_finite("backward", &g)?;
                out[idx] = Some(g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn local_grads(&self, node: &Node<'a>, g: &Tensor) -> Vec<(Var, Tensor)> {
        let shaped = |like: &Tensor, data: Vec<f64>| {
            Tensor::new(like.shape().to_vec(), data).expect("gradient shape follows its input")
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                let mut out = Vec::with_capacity(2);
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut da, false);
                    out.push((*a, shaped(ta, da)));
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut db, false);
                    out.push((*b, shaped(tb, db)));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddRow(x, row) => {
                let cols = g.cols();
                let mut dr = vec![0.0; cols];
                for chunk in g.data().chunks(cols) {
                    for (d, v) in dr.iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
                vec![(*x, g.clone()), (*row, shaped(self.value(*row), dr))]
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db = g.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                vec![(*a, shaped(ta, da)), (*b, shaped(tb, db))]
            }
            Op::Scale(x, f) => {
                let dx = g.data().iter().map(|v| v * f).collect();
                vec![(*x, shaped(g, dx))]
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let dx = g
                    .data()
                    .iter()
                    .zip(tx.data())
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![(*x, shaped(tx, dx))]
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let cols = y.cols();
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.data().chunks(cols).zip(g.data().chunks(cols)).zip(dx.chunks_mut(cols)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![(*x, shaped(y, dx))]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gain);
                let cols = tg.len();
                let nf = cols as f64;
                let mut dx = vec![0.0; xhat.len()];
                let mut dg = vec![0.0; cols];
                let mut db = vec![0.0; cols];
                let rows = g.data().chunks(cols).zip(xhat.chunks(cols)).zip(dx.chunks_mut(cols));
                for (((gr, xr), dr), &is) in rows.zip(inv_std) {
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..cols {
                        let dxh = gr[j] * tg.data()[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xr[j];
                        dg[j] += gr[j] * xr[j];
                        db[j] += gr[j];
                    }
                    for j in 0..cols {
                        let dxh = gr[j] * tg.data()[j];
                        dr[j] = is / nf * (nf * dxh - sum_dxh - xr[j] * sum_dxh_xh);
                    }
                }
                vec![
                    (*x, shaped(self.value(*x), dx)),
                    (*gain, shaped(tg, dg)),
                    (*bias, shaped(self.value(*bias), db)),
                ]
            }
            Op::Transpose(x) => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[j * r + i] = g.data()[i * c + j];
                    }
                }
                vec![(*x, shaped(self.value(*x), dx))]
            }
            Op::ConcatCols(parts) => {
                let rows = g.shape()[0];
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let tp = self.value(p);
                        let w = tp.shape()[1];
                        let mut dp = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            dp.extend_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        offset += w;
                        (p, shaped(tp, dp))
                    })
                    .collect()
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let tp = self.value(p);
                        let dp = g.data()[offset..offset + tp.len()].to_vec();
                        offset += tp.len();
                        (p, shaped(tp, dp))
                    })
                    .collect()
            }
            Op::SliceCols(x, start) => {
                let tx = self.value(*x);
                let (r, c) = (tx.shape()[0], tx.shape()[1]);
                let w = g.shape()[1];
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                vec![(*x, shaped(tx, dx))]
            }
            Op::SliceRows(x, start) => {
                let tx = self.value(*x);
                let c = tx.shape()[1];
                let mut dx = vec![0.0; tx.len()];
                dx[start * c..start * c + g.len()].copy_from_slice(g.data());
                vec![(*x, shaped(tx, dx))]
            }
            Op::Sum(x) => {
                let tx = self.value(*x);
                vec![(*x, Tensor::filled(tx.shape(), g.item()))]
            }
            Op::CrossEntropy { logits, target, probs } => {
                let scale = g.item();
                let mut dl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                dl[*target] -= scale;
                vec![(*logits, shaped(self.value(*logits), dl))]
            }
            Op::Dropout(x, mask) => {
                let dx = g.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                vec![(*x, shaped(g, dx))]
            }
        }
    }
}
