use serde::{Deserialize, Serialize};

use super::{Rng, Scalar, Tensor, PROB_EPS};
use crate::error::{Error, Result};

const MASK_VALUE: f64 = -1e9;
const LN_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Sum,
    Mean,
    Max,
}

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Transpose(usize),
    Softmax(usize),
    CausalMask(usize, usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    Relu(usize),
    Gelu(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        probs: Vec<T>,
        clamped: Vec<bool>,
    },
    Sum(usize),
    Mean(usize),
    RelGather(usize, usize),
    SegmentPool {
        x: usize,
        starts: Vec<usize>,
        kind: PoolKind,
        argmax: Vec<usize>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single-use computation tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and `backward` walks it in reverse.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_2d(op: &'static str, t: &[usize]) -> Result<(usize, usize)> {
    if t.len() != 2 {
        return Err(Error::shape(op, t, &[0, 0]));
    }
    Ok((t[0], t[1]))
}

// c[m,n] += a[m,k] * b[k,n]
fn mm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
fn mm_nt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            c[i * n + j] += s;
        }
    }
}

// c[m,n] += a[k,m]^T * b[k,n]
fn mm_tn_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn gelu<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation; returns (value, derivative)
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let one = T::one();
    let three = T::of(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let value = half * x * (one + t);
    let dinner = c * (one + three * a * x * x);
    let deriv = half * (one + t) + half * x * (one - t * t) * dinner;
    (value, deriv)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf; receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to a parameter leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by node values; the allocation counter behind memory-estimate checks.
    pub fn bytes_allocated(&self) -> usize {
        self.nodes.iter().map(|n| n.value.numel() * T::BYTES).sum()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = check_2d("matmul", self.shape(a))?;
        let (k2, n) = check_2d("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![T::zero(); m * n];
        mm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    /// `a * b^T` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = check_2d("matmul_nt", self.shape(a))?;
        let (n, k2) = check_2d("matmul_nt", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![T::zero(); m * n];
        mm_nt_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMulNt(a.0, b.0), &[a.0, b.0]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    /// Adds a length-`cols` vector to every row of a matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(bias).numel() != cols {
            return Err(Error::shape("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(cols) {
            for (v, &bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        Ok(self.push(value, Op::AddRow(x.0, bias.0), &[x.0, bias.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let ct = T::of(c);
        let data = self.value(x).data().iter().map(|&v| v * ct).collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Scale(x.0, c), &[x.0])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = check_2d("transpose", self.shape(x))?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::new(&[c, r], out)?;
        Ok(self.push(value, Op::Transpose(x.0), &[x.0]))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        let cols = value.cols();
        for row in value.data_mut().chunks_mut(cols) {
            softmax_in_place(row);
        }
        self.push(value, Op::Softmax(x.0), &[x.0])
    }

    /// Masks entry `(i, j)` whenever `j > i + offset`.
    pub fn causal_mask(&mut self, x: Var, offset: usize) -> Result<Var> {
        let (r, c) = check_2d("causal_mask", self.shape(x))?;
        let mut value = self.value(x).clone();
        let masked = T::of(MASK_VALUE);
        let d = value.data_mut();
        for i in 0..r {
            for j in (i + offset + 1).min(c)..c {
                d[i * c + j] = masked;
            }
        }
        Ok(self.push(value, Op::CausalMask(x.0, offset), &[x.0]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(gain).numel() != cols || self.value(bias).numel() != cols {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let rows = self.value(x).rows();
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let n = T::of(cols as f64);
        let eps = T::of(LN_EPS);
        let mut xhat = vec![T::zero(); rows * cols];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let value = Tensor::new(self.shape(x), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                inv_std,
            },
            &[x.0, gain.0, bias.0],
        ))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = check_2d("embedding", self.shape(table))?;
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: v,
                });
            }
            out.extend_from_slice(&t[id * d..(id + 1) * d]);
        }
        let value = Tensor::new(&[ids.len(), d], out)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|p| self.value(*p)).collect();
        for v in &values {
            check_2d("concat_rows", v.shape())?;
        }
        let value = Tensor::vstack(&values)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatRows(idx.clone()), &idx))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
        let (rows, _) = check_2d("concat_cols", self.shape(first))?;
        let mut total = 0;
        for p in parts {
            let (r, c) = check_2d("concat_cols", self.shape(*p))?;
            if r != rows {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(*p)));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::new(&[rows, total], out)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatCols(idx.clone()), &idx))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, _) = check_2d("slice_rows", self.shape(x))?;
        if start + len > r {
            return Err(Error::shape("slice_rows", self.shape(x), &[start, len]));
        }
        let value = self.value(x).slice_rows(start, len);
        Ok(self.push(value, Op::SliceRows(x.0, start), &[x.0]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = check_2d("slice_cols", self.shape(x))?;
        if start + len > c {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let value = Tensor::new(&[r, len], out)?;
        Ok(self.push(value, Op::SliceCols(x.0, start), &[x.0]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Relu(x.0), &[x.0])
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| gelu(v).0).collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Gelu(x.0), &[x.0])
    }

    /// Inverted dropout with a constant keep mask drawn from `rng`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask = Tensor::from_fn(self.shape(x), |_| {
            if rng.uniform() < p {
                T::zero()
            } else {
                keep
            }
        });
        let m = self.constant(mask);
        self.mul(x, m)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. Probabilities are floored at [`PROB_EPS`] before the log.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (n, v) = check_2d("cross_entropy", self.shape(logits))?;
        if targets.len() != n {
            return Err(Error::shape("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        let mut probs = self.value(logits).data().to_vec();
        let eps = T::of(PROB_EPS);
        let mut clamped = vec![false; n];
        let mut total = T::zero();
        for (r, row) in probs.chunks_mut(v).enumerate() {
            softmax_in_place(row);
            let t = targets[r];
            if t >= v {
                return Err(Error::TokenOutOfRange { id: t, vocab_size: v });
            }
            let p = if row[t] < eps {
                clamped[r] = true;
                eps
            } else {
                row[t]
            };
            total -= p.ln();
        }
        let loss = total / T::of(n as f64);
        let value = Tensor::new(&[1], vec![loss])?;
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
                clamped,
            },
            &[logits.0],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v);
        self.push(Tensor { shape: vec![1], data: vec![s] }, Op::Sum(x.0), &[x.0])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().fold(T::zero(), |a, &v| a + v) / T::of(t.numel() as f64);
        self.push(Tensor { shape: vec![1], data: vec![s] }, Op::Mean(x.0), &[x.0])
    }

    /// Re-indexes a `[q, k]` score matrix whose column `d` holds relative
    /// distance `d` into absolute key positions: `out[i][j] = x[i][mem + i - j]`
    /// for `j <= mem + i`, zero otherwise.
    pub fn rel_gather(&mut self, x: Var, mem: usize) -> Result<Var> {
        let (q, k) = check_2d("rel_gather", self.shape(x))?;
        if mem + q > k {
            return Err(Error::shape("rel_gather", self.shape(x), &[mem, q]));
        }
        let src = self.value(x).data();
        let mut out = vec![T::zero(); q * k];
        for i in 0..q {
            for j in 0..=(mem + i) {
                out[i * k + j] = src[i * k + mem + i - j];
            }
        }
        let value = Tensor::new(&[q, k], out)?;
        Ok(self.push(value, Op::RelGather(x.0, mem), &[x.0]))
    }

    /// Pools rows `starts[t]..=t` of `x` into output row `t`.
    pub fn segment_pool(&mut self, x: Var, starts: &[usize], kind: PoolKind) -> Result<Var> {
        let (n, d) = check_2d("segment_pool", self.shape(x))?;
        if starts.len() != n || starts.iter().enumerate().any(|(t, &s)| s > t) {
            return Err(Error::shape("segment_pool", self.shape(x), &[starts.len()]));
        }
        let src = self.value(x).data();
        let mut out = vec![T::zero(); n * d];
        let mut argmax = if kind == PoolKind::Max {
            vec![0; n * d]
        } else {
            Vec::new()
        };
        for t in 0..n {
            let s = starts[t];
            for c in 0..d {
                let v = match kind {
                    PoolKind::Sum | PoolKind::Mean => {
                        let mut acc = T::zero();
                        for r in s..=t {
                            acc += src[r * d + c];
                        }
                        if kind == PoolKind::Mean {
                            acc / T::of((t - s + 1) as f64)
                        } else {
                            acc
                        }
                    }
                    PoolKind::Max => {
                        let mut best = s;
                        for r in s + 1..=t {
                            if src[r * d + c] > src[best * d + c] {
                                best = r;
                            }
                        }
                        argmax[t * d + c] = best;
                        src[best * d + c]
                    }
                };
                out[t * d + c] = v;
            }
        }
        let value = Tensor::new(&[n, d], out)?;
        Ok(self.push(
            value,
            Op::SegmentPool {
                x: x.0,
                starts: starts.to_vec(),
                kind,
                argmax,
            },
            &[x.0],
        ))
    }

    /// Reverse pass from a scalar node. Gradients are kept for leaves only.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }

        self.grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| matches!(self.nodes[i].op, Op::Leaf))
                    .map(|data| Tensor {
                        shape: self.nodes[i].value.shape().to_vec(),
                        data,
                    })
            })
            .collect();
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let wants = |i: usize| nodes[i].requires_grad;
        let acc = |i: usize, grads: &mut [Option<Vec<T>>], f: &mut dyn FnMut(&mut [T])| {
            if !nodes[i].requires_grad {
                return;
            }
            let slot = grads[i].get_or_insert_with(|| vec![T::zero(); nodes[i].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[*a].value.rows(), nodes[*a].value.cols());
                let nn = nodes[*b].value.cols();
                if wants(*a) {
                    let bv = nodes[*b].value.data();
                    acc(*a, grads, &mut |s| mm_nt_acc(g, bv, s, m, nn, k));
                }
                if wants(*b) {
                    let av = nodes[*a].value.data();
                    acc(*b, grads, &mut |s| mm_tn_acc(av, g, s, m, k, nn));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = (nodes[*a].value.rows(), nodes[*a].value.cols());
                let nn = nodes[*b].value.rows();
                if wants(*a) {
                    let bv = nodes[*b].value.data();
                    acc(*a, grads, &mut |s| mm_acc(g, bv, s, m, nn, k));
                }
                if wants(*b) {
                    let av = nodes[*a].value.data();
                    acc(*b, grads, &mut |s| mm_tn_acc(g, av, s, m, nn, k));
                }
            }
            Op::Add(a, b) => {
                for i in [*a, *b] {
                    acc(i, grads, &mut |s| add_into(s, g));
                }
            }
            Op::AddRow(x, b) => {
                acc(*x, grads, &mut |s| add_into(s, g));
                let cols = nodes[*b].value.numel();
                acc(*b, grads, &mut |s| {
                    for row in g.chunks(cols) {
                        add_into(s, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = nodes[*a].value.data();
                let bv = nodes[*b].value.data();
                acc(*a, grads, &mut |s| {
                    for ((s, &gv), &y) in s.iter_mut().zip(g).zip(bv) {
                        *s += gv * y;
                    }
                });
                acc(*b, grads, &mut |s| {
                    for ((s, &gv), &x) in s.iter_mut().zip(g).zip(av) {
                        *s += gv * x;
                    }
                });
            }
            Op::Scale(x, c) => {
                let ct = T::of(*c);
                acc(*x, grads, &mut |s| {
                    for (s, &gv) in s.iter_mut().zip(g) {
                        *s += gv * ct;
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = (nodes[*x].value.rows(), nodes[*x].value.cols());
                acc(*x, grads, &mut |s| {
                    for i in 0..r {
                        for j in 0..c {
                            s[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let cols = node.value.cols();
                acc(*x, grads, &mut |s| {
                    for ((srow, yrow), grow) in s
                        .chunks_mut(cols)
                        .zip(y.chunks(cols))
                        .zip(g.chunks(cols))
                    {
                        let dot = yrow
                            .iter()
                            .zip(grow)
                            .fold(T::zero(), |a, (&yv, &gv)| a + yv * gv);
                        for ((sv, &yv), &gv) in srow.iter_mut().zip(yrow).zip(grow) {
                            *sv += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::CausalMask(x, offset) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                acc(*x, grads, &mut |s| {
                    for i in 0..r {
                        let lim = (i + offset + 1).min(c);
                        for j in 0..lim {
                            s[i * c + j] += g[i * c + j];
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = node.value.cols();
                let gv = nodes[*gain].value.data();
                acc(*gain, grads, &mut |s| {
                    for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                        for c in 0..cols {
                            s[c] += grow[c] * hrow[c];
                        }
                    }
                });
                acc(*bias, grads, &mut |s| {
                    for grow in g.chunks(cols) {
                        add_into(s, grow);
                    }
                });
                let n = T::of(cols as f64);
                acc(*x, grads, &mut |s| {
                    for (r, ((srow, grow), hrow)) in s
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(xhat.chunks(cols))
                        .enumerate()
                    {
                        let mut sum_d = T::zero();
                        let mut sum_dh = T::zero();
                        for c in 0..cols {
                            let d = grow[c] * gv[c];
                            sum_d += d;
                            sum_dh += d * hrow[c];
                        }
                        for c in 0..cols {
                            let d = grow[c] * gv[c];
                            srow[c] += inv_std[r] * (n * d - sum_d - hrow[c] * sum_dh) / n;
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = nodes[*table].value.cols();
                acc(*table, grads, &mut |s| {
                    for (t, &id) in ids.iter().enumerate() {
                        add_into(&mut s[id * d..(id + 1) * d], &g[t * d..(t + 1) * d]);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p].value.numel();
                    acc(p, grads, &mut |s| add_into(s, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut col = 0;
                for &p in parts {
                    let c = nodes[p].value.cols();
                    acc(p, grads, &mut |s| {
                        for r in 0..rows {
                            add_into(
                                &mut s[r * c..(r + 1) * c],
                                &g[r * total + col..r * total + col + c],
                            );
                        }
                    });
                    col += c;
                }
            }
            Op::SliceRows(x, start) => {
                let c = node.value.cols();
                acc(*x, grads, &mut |s| {
                    add_into(&mut s[start * c..start * c + g.len()], g);
                });
            }
            Op::SliceCols(x, start) => {
                let c = nodes[*x].value.cols();
                let len = node.value.cols();
                acc(*x, grads, &mut |s| {
                    for (r, grow) in g.chunks(len).enumerate() {
                        add_into(&mut s[r * c + start..r * c + start + len], grow);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = nodes[*x].value.data();
                acc(*x, grads, &mut |s| {
                    for ((s, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *s += gv;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = nodes[*x].value.data();
                acc(*x, grads, &mut |s| {
                    for ((s, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        *s += gv * gelu(v).1;
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                clamped,
            } => {
                let v = nodes[*logits].value.cols();
                let scale = g[0] / T::of(targets.len() as f64);
                acc(*logits, grads, &mut |s| {
                    for (r, (srow, prow)) in s.chunks_mut(v).zip(probs.chunks(v)).enumerate() {
                        if clamped[r] {
                            continue;
                        }
                        for (c, (sv, &p)) in srow.iter_mut().zip(prow).enumerate() {
                            let onehot = if c == targets[r] { T::one() } else { T::zero() };
                            *sv += scale * (p - onehot);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, grads, &mut |s| s.iter_mut().for_each(|v| *v += g[0]));
            }
            Op::Mean(x) => {
                let n = T::of(nodes[*x].value.numel() as f64);
                acc(*x, grads, &mut |s| s.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::RelGather(x, mem) => {
                let (q, k) = (node.value.rows(), node.value.cols());
                acc(*x, grads, &mut |s| {
                    for i in 0..q {
                        for j in 0..=(mem + i) {
                            s[i * k + mem + i - j] += g[i * k + j];
                        }
                    }
                });
            }
            Op::SegmentPool {
                x,
                starts,
                kind,
                argmax,
            } => {
                let d = node.value.cols();
                acc(*x, grads, &mut |s| {
                    for (t, &st) in starts.iter().enumerate() {
                        for c in 0..d {
                            let gv = g[t * d + c];
                            match kind {
                                PoolKind::Sum => {
                                    for r in st..=t {
                                        s[r * d + c] += gv;
                                    }
                                }
                                PoolKind::Mean => {
                                    let w = gv / T::of((t - st + 1) as f64);
                                    for r in st..=t {
                                        s[r * d + c] += w;
                                    }
                                }
                                PoolKind::Max => s[argmax[t * d + c] * d + c] += gv,
                            }
                        }
                    }
                });
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
