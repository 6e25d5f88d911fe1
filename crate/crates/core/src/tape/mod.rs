//! Reverse-mode automatic differentiation over a per-pass tape.
//!
//! A [`Graph`] records every operation of one forward pass as a node holding
//! its value. [`Graph::backward`] consumes the graph, walks the nodes in
//! reverse creation order (a valid reverse topological order) and returns the
//! accumulated gradients of every node that requires one.

mod broadcast;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::SeedRng;
use crate::tensor::{numel, Tensor};
use broadcast::{broadcast_shape, broadcast_strides, reduce_to, walk2};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Gelu,
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskMul(Var, Vec<f64>),
    MatMul(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Unary(Var, Unary),
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Gather {
        table: Var,
        rows: Vec<usize>,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: BTreeMap<ParamId, Var>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `out[m,p] += a[m,k] * b[k,p]`, with optional transposition of either side.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, p: usize, ta: bool, tb: bool) {
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for kk in 0..k {
            let av = if ta { a[kk * m + i] } else { a[i * k + kk] };
            if av == 0.0 {
                continue;
            }
            if tb {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * b[j * k + kk];
                }
            } else {
                let brow = &b[kk * p..(kk + 1) * p];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

struct MatMulDims {
    batch: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
    m: usize,
    k: usize,
    p: usize,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatMulDims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::dim("matmul", a, b));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, p) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(Error::dim("matmul", a, b));
    }
    let (ab, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let batch = broadcast_shape(ab, bb).ok_or_else(|| Error::dim("matmul", a, b))?;
    Ok(MatMulDims {
        a_strides: broadcast_strides(ab, &batch),
        b_strides: broadcast_strides(bb, &batch),
        batch,
        m,
        k,
        p,
    })
}

/// Splits a shape around `axis` into (outer, extent, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(value.shape()), value.len());
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a stored parameter as a gradient leaf. Repeated binds of the same
    /// parameter return the same node, so every use accumulates into one grad.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bindings.get(&id) {
            return v;
        }
        let v = self.variable(store.get(id).clone());
        self.bindings.insert(id, v);
        v
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let va = self.value(a).data();
        let vb = self.value(b).data();
        if sa == sb {
            let data = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(sa, data);
        }
        let out = broadcast_shape(sa, sb).ok_or_else(|| Error::dim(name, sa, sb))?;
        let (ta, tb) = (broadcast_strides(sa, &out), broadcast_strides(sb, &out));
        let mut data = vec![0.0; numel(&out)];
        walk2(&out, &ta, &tb, |i, ia, ib| data[i] = f(va[ia], vb[ib]));
        Tensor::new(&out, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|x| x * s).collect();
        let t = Tensor::new(src.shape(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, s), rg)
    }

    /// Batched matrix product `[..,M,K] x [..,K,P] -> [..,M,P]` with
    /// broadcasting over the leading axes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = matmul_dims(self.shape(a), self.shape(b))?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let (m, k, p) = (d.m, d.k, d.p);
        let mut out = vec![0.0; numel(&d.batch) * m * p];
        walk2(&d.batch, &d.a_strides, &d.b_strides, |i, ia, ib| {
            gemm_acc(
                &mut out[i * m * p..(i + 1) * m * p],
                &va[ia * m * k..(ia + 1) * m * k],
                &vb[ib * k * p..(ib + 1) * k * p],
                m,
                k,
                p,
                false,
                false,
            );
        });
        let mut shape = d.batch.clone();
        shape.extend([m, p]);
        let t = Tensor::new(&shape, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim("permute", &shape, perm));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let in_strides = broadcast_strides(&shape, &shape);
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let src = self.value(x).data();
        let mut data = vec![0.0; src.len()];
        walk2(&out_shape, &strides, &strides, |i, off, _| data[i] = src[off]);
        let t = Tensor::new(&out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Permute(x, perm.to_vec()), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        if rank < 2 {
            return Err(Error::dim("transpose", self.shape(x), &[]));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(x, &perm)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Usage(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..n {
                    let e = libm::exp(src[at(j)] - max);
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[at(j)] /= total;
                }
            }
        }
        let t = Tensor::new(&shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax(x, axis), rg))
    }

    /// Normalises over the last axis then applies `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().expect("non-empty shape");
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(Error::dim("layer_norm", &shape, self.shape(gamma)));
        }
        let src = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = src.len() / n;
        let mut out = vec![0.0; src.len()];
        let mut xhat = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = g[c] * h + b[c];
            }
        }
        let t = Tensor::new(&shape, out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let src = self.value(x);
        let f = match kind {
            Unary::Gelu => gelu,
            Unary::Tanh => libm::tanh,
            Unary::Sigmoid => sigmoid,
            Unary::Relu => |v: f64| if v > 0.0 { v } else { 0.0 },
        };
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(src.shape(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Unary(x, kind), rg)
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Gelu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    /// Inverted dropout. `rng == None` means evaluation mode and returns `x`
    /// itself; in training mode kept units are scaled by `1 / (1 - p)`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: Option<&mut SeedRng>) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        let rng = match rng {
            Some(rng) if p > 0.0 => rng,
            _ => return Ok(x),
        };
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(src.shape(), data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::MaskMul(x, mask), rg))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or_else(|| Error::Usage("concat of nothing".into()))?).to_vec();
        if axis >= first.len() {
            return Err(Error::Usage(format!("concat axis {axis} out of range for {first:?}")));
        }
        let mut extent = 0;
        for &p in parts {
            let s = self.shape(p);
            let same = s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same {
                return Err(Error::dim("concat", &first, s));
            }
            extent += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut shape = first.clone();
        shape[axis] = extent;
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let t = Tensor::new(&shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(t, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Usage(format!("slice {start}+{len} on axis {axis} of {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out = shape.clone();
        out[axis] = len;
        let t = Tensor::new(&out, data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Slice { x, axis, start }, rg))
    }

    /// Row lookup: `table[R,C]`, `rows` -> `[rows.len(), C]`.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 || rows.is_empty() {
            return Err(Error::dim("gather", shape, &[rows.len()]));
        }
        let (r, c) = (shape[0], shape[1]);
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::Data(format!("row {bad} out of range for table with {r} rows")));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(&[rows.len(), c], data)?;
        let rg = self.rg(table);
        Ok(self.push(
            t,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean softmax cross-entropy of `logits[M,C]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(Error::dim("cross_entropy", &shape, &[targets.len()]));
        }
        let (m, c) = (shape[0], shape[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Config(format!("target class {bad} outside {c} classes")));
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; m * c];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &src[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
            let log_z = max + libm::log(total);
            for j in 0..c {
                probs[r * c + j] = libm::exp(row[j] - log_z);
            }
            loss += log_z - row[t];
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss / m as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Runs reverse-mode accumulation from a scalar `loss` and releases the
    /// tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        let acc = |grads: &mut Vec<Option<Vec<f64>>>, v: Var, g: Vec<f64>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += x),
                slot => *slot = Some(g),
            }
        };
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out_shape = node.value.shape();
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let ga = reduce_to(&g, out_shape, nodes[a.0].value.shape());
                    let mut gb = reduce_to(&g, out_shape, nodes[b.0].value.shape());
                    if matches!(node.op, Op::Sub(..)) {
                        gb.iter_mut().for_each(|v| *v = -*v);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let (ta, tb) = (broadcast_strides(sa, out_shape), broadcast_strides(sb, out_shape));
                    let mut ga = vec![0.0; va.len()];
                    let mut gb = vec![0.0; vb.len()];
                    walk2(out_shape, &ta, &tb, |o, ia, ib| {
                        ga[ia] += g[o] * vb[ib];
                        gb[ib] += g[o] * va[ia];
                    });
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.iter().map(|v| v * s).collect()),
                Op::MaskMul(a, mask) => acc(&mut grads, *a, g.iter().zip(mask).map(|(v, m)| v * m).collect()),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let d = matmul_dims(ta.shape(), tb.shape())?;
                    let (m, k, p) = (d.m, d.k, d.p);
                    let mut ga = vec![0.0; ta.len()];
                    let mut gb = vec![0.0; tb.len()];
                    let (va, vb) = (ta.data(), tb.data());
                    walk2(&d.batch, &d.a_strides, &d.b_strides, |o, ia, ib| {
                        let go = &g[o * m * p..(o + 1) * m * p];
                        // dA = G Bᵀ, dB = Aᵀ G
                        gemm_acc(&mut ga[ia * m * k..(ia + 1) * m * k], go, &vb[ib * k * p..(ib + 1) * k * p], m, p, k, false, true);
                        gemm_acc(&mut gb[ib * k * p..(ib + 1) * k * p], &va[ia * m * k..(ia + 1) * m * k], go, k, m, p, true, false);
                    });
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Permute(x, perm) => {
                    let in_shape = nodes[x.0].value.shape();
                    let in_strides = broadcast_strides(in_shape, in_shape);
                    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
                    let mut gx = vec![0.0; g.len()];
                    walk2(out_shape, &strides, &strides, |o, off, _| gx[off] = g[o]);
                    acc(&mut grads, *x, gx);
                }
                Op::Reshape(x) => acc(&mut grads, *x, g),
                Op::Softmax(x, axis) => {
                    let (outer, n, inner) = split_axis(out_shape, *axis);
                    let y = node.value.data();
                    let mut gx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * n * inner + j * inner + i;
                            let dot: f64 = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..n {
                                gx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = *out_shape.last().unwrap();
                    let gv = nodes[gamma.0].value.data();
                    let mut gx = vec![0.0; g.len()];
                    let mut gg = vec![0.0; n];
                    let mut gbeta = vec![0.0; n];
                    for (r, &is) in inv_std.iter().enumerate() {
                        let row = r * n..(r + 1) * n;
                        let (gr, hr) = (&g[row.clone()], &xhat[row.clone()]);
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for c in 0..n {
                            let d = gr[c] * gv[c];
                            mean_d += d;
                            mean_dh += d * hr[c];
                            gg[c] += gr[c] * hr[c];
                            gbeta[c] += gr[c];
                        }
                        mean_d /= n as f64;
                        mean_dh /= n as f64;
                        for c in 0..n {
                            gx[r * n + c] = is * (gr[c] * gv[c] - mean_d - hr[c] * mean_dh);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gbeta);
                }
                Op::Unary(x, kind) => {
                    let (xv, yv) = (nodes[x.0].value.data(), node.value.data());
                    let gx = g
                        .iter()
                        .zip(xv.iter().zip(yv))
                        .map(|(gi, (&xi, &yi))| {
                            gi * match kind {
                                Unary::Gelu => gelu_grad(xi),
                                Unary::Tanh => 1.0 - yi * yi,
                                Unary::Sigmoid => yi * (1.0 - yi),
                                Unary::Relu => {
                                    if xi > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                            }
                        })
                        .collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Concat(parts, axis) => {
                    let (outer, _, inner) = split_axis(out_shape, *axis);
                    let mut pieces: Vec<Vec<f64>> = parts.iter().map(|p| Vec::with_capacity(nodes[p.0].value.len())).collect();
                    let mut cursor = 0;
                    for _ in 0..outer {
                        for (k, p) in parts.iter().enumerate() {
                            let chunk = nodes[p.0].value.shape()[*axis] * inner;
                            pieces[k].extend_from_slice(&g[cursor..cursor + chunk]);
                            cursor += chunk;
                        }
                    }
                    for (p, piece) in parts.iter().zip(pieces) {
                        acc(&mut grads, *p, piece);
                    }
                }
                Op::Slice { x, axis, start } => {
                    let in_shape = nodes[x.0].value.shape();
                    let (outer, n, inner) = split_axis(in_shape, *axis);
                    let len = out_shape[*axis];
                    let mut gx = vec![0.0; nodes[x.0].value.len()];
                    for o in 0..outer {
                        let base = o * n * inner + start * inner;
                        gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gather { table, rows } => {
                    let c = out_shape[1];
                    let mut gt = vec![0.0; nodes[table.0].value.len()];
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            gt[r * c + j] += g[k * c + j];
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::Sum(x) => {
                    let n = nodes[x.0].value.len();
                    acc(&mut grads, *x, vec![g[0]; n]);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let c = nodes[logits.0].value.shape()[1];
                    let scale = g[0] / targets.len() as f64;
                    let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[r * c + t] -= scale;
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|data| Tensor::new(node.value.shape(), data).expect("grad shape")))
            .collect();
        Ok(Gradients {
            grads,
            bindings: self.bindings,
        })
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    bindings: BTreeMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of a leaf, if the loss reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.bindings.get(&id).and_then(|&v| self.get(v))
    }

    /// Per-parameter gradients aligned with `store`'s ids; `None` for
    /// parameters the loss never touched.
    pub fn for_store(&self, store: &ParamStore) -> ParamGrads {
        ParamGrads(store.ids().map(|id| self.param(id).cloned()).collect())
    }
}

/// Gradients aligned with one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct ParamGrads(pub Vec<Option<Tensor>>);

#[cfg(test)]
mod tests;
