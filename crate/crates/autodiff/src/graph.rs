//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node whose inputs are earlier nodes, so node
//! order is already a topological order and `backward` is a single reverse
//! sweep. Values are computed eagerly when a node is created.

use crate::error::{shape_err, AutodiffError, Result};
use crate::param::{Gradients, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{axis_split, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Training mode enables dropout; evaluation mode makes it the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    CausalConv {
        x: Var,
        w: Var,
        b: Var,
        dilation: usize,
    },
    Upsample {
        x: Var,
        taps: Vec<(usize, T)>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    seed: u64,
    dropout_calls: u64,
    max_param: Option<usize>,
}

impl<T: Real> Graph<T> {
    pub fn new(mode: Mode) -> Self {
        Self::with_seed(mode, 0)
    }

    /// `seed` drives the counter-based dropout masks.
    pub fn with_seed(mode: Mode, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            seed,
            dropout_calls: 0,
            max_param: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: &'static str, value: Tensor<T>, kind: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteValue { op });
        }
        let requires_grad = match &kind {
            Op::Leaf => false,
            Op::Param(_) => true,
            other => inputs(other).iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op: kind,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push("input", t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        self.max_param = Some(self.max_param.map_or(id.0, |m| m.max(id.0)));
        self.push("param", store.get(id).clone(), Op::Param(id))
    }

    /// Binds every parameter of `store`, in store order.
    pub fn bind_params(&mut self, store: &ParamStore<T>) -> Result<Vec<Var>> {
        (0..store.len()).map(|i| self.param(store, ParamId(i))).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        let t = Tensor::new(vec![m, n], out)?;
        self.push("matmul", t, Op::MatMul(a, b))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b))
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = *tx.shape().last().unwrap_or(&0);
        if tb.rank() != 1 || tb.len() != n || n == 0 {
            return Err(shape_err("add_bias", format!("{:?} + {:?}", tx.shape(), tb.shape())));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (v, &b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("add_bias", t, Op::AddBias(x, bias))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::of(c);
        let tx = self.value(x);
        let t = Tensor::new(tx.shape().to_vec(), tx.data().iter().map(|&v| v * c).collect())?;
        self.push("scale", t, Op::Scale(x, c))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let t = Tensor::new(shape, data)?;
        self.push(
            "concat",
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        )
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            return Err(shape_err(
                "slice",
                format!("[{start}..{}) on axis {axis} of {s:?}", start + len),
            ));
        }
        let (outer, dim, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let t = Tensor::new(shape, data)?;
        self.push("slice", t, Op::Slice { x, axis, start })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push("reshape", t, Op::Reshape(x))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(shape_err("mean", "empty tensor"));
        }
        let s: T = t.data().iter().copied().sum();
        let m = s / T::of(t.len() as f64);
        self.push("mean", Tensor::scalar(m), Op::Mean(x))
    }

    fn map(&self, x: Var, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
        let t = self.value(x);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, |v| if v > T::zero() { v } else { T::zero() })?;
        self.push("relu", t, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, |v| T::one() / (T::one() + (-v).exp()))?;
        self.push("sigmoid", t, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, |v| v.tanh())?;
        self.push("tanh", t, Op::Tanh(x))
    }

    /// Layer normalization over the last axis with learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = *tx.shape().last().unwrap_or(&0);
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if n == 0 || tg.shape() != [n] || tb.shape() != [n] {
            return Err(shape_err(
                "layer_norm",
                format!("{:?} with gamma {:?} beta {:?}", tx.shape(), tg.shape(), tb.shape()),
            ));
        }
        let rows = tx.len() / n;
        let mut normalized = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.len());
        let nf = T::of(n as f64);
        for row in tx.data().chunks_exact(n) {
            let mu = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / nf;
            let inv = T::one() / (var + T::of(LAYER_NORM_EPS)).sqrt();
            inv_std.push(inv);
            for ((&v, &g), &b) in row.iter().zip(tg.data()).zip(tb.data()) {
                let h = (v - mu) * inv;
                normalized.push(h);
                out.push(g * h + b);
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(
            "layer_norm",
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        )
    }

    /// Inverted dropout in training mode, identity in evaluation mode.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if self.mode == Mode::Eval || rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(shape_err("dropout", format!("rate {rate} must be < 1")));
        }
        let call = self.dropout_calls;
        self.dropout_calls += 1;
        let keep = T::of(1.0 / (1.0 - rate));
        let stream = splitmix64(self.seed ^ splitmix64(call.wrapping_add(0x5eed)));
        let tx = self.value(x);
        let mask: Vec<T> = (0..tx.len() as u64)
            .map(|i| {
                if unit_interval(splitmix64(stream ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15))) < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("dropout", t, Op::Dropout { x, mask })
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `x` is `[batch, in_channels, time]`, `w` is `[out_channels, in_channels, kernel]`,
    /// `b` is `[out_channels]`. Tap `kernel - 1` reads the current step and tap `j`
    /// reads `(kernel - 1 - j) * dilation` steps back; earlier positions are zero.
    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 3 || sw.len() != 3 || sw[1] != sx[1] || sb != [sw[0]] || dilation == 0 {
            return Err(shape_err(
                "causal_conv1d",
                format!("x {sx:?} w {sw:?} b {sb:?} dilation {dilation}"),
            ));
        }
        let geom = ConvGeom {
            batch: sx[0],
            cin: sx[1],
            time: sx[2],
            cout: sw[0],
            kernel: sw[2],
            dilation,
        };
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![T::zero(); geom.batch * geom.cout * geom.time];
        let mut col = vec![T::zero(); geom.cin * geom.kernel * geom.time];
        let in_block = geom.cin * geom.time;
        let out_block = geom.cout * geom.time;
        for bi in 0..geom.batch {
            geom.im2col(&tx.data()[bi * in_block..(bi + 1) * in_block], &mut col);
            let dst = &mut out[bi * out_block..(bi + 1) * out_block];
            for (o, row) in dst.chunks_exact_mut(geom.time).enumerate() {
                row.iter_mut().for_each(|v| *v = tb.data()[o]);
            }
            T::gemm(
                geom.cout,
                geom.cin * geom.kernel,
                geom.time,
                tw.data(),
                false,
                &col,
                false,
                dst,
                true,
            );
        }
        let t = Tensor::new(vec![geom.batch, geom.cout, geom.time], out)?;
        self.push("causal_conv1d", t, Op::CausalConv { x, w, b, dilation })
    }

    /// Linear interpolation of the last axis from `n` coefficients to `len` points,
    /// with both endpoints aligned.
    pub fn upsample_linear(&mut self, x: Var, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().unwrap_or(&0);
        if n == 0 || len == 0 {
            return Err(shape_err("upsample_linear", format!("{s:?} -> {len}")));
        }
        let taps = interpolation_taps::<T>(n, len);
        let src = self.value(x).data();
        let rows = src.len() / n;
        let mut data = Vec::with_capacity(rows * len);
        for row in src.chunks_exact(n) {
            for &(i, frac) in &taps {
                let hi = if i + 1 < n { row[i + 1] } else { row[i] };
                data.push(row[i] * (T::one() - frac) + hi * frac);
            }
        }
        let mut shape = s;
        *shape.last_mut().expect("rank >= 1") = len;
        let t = Tensor::new(shape, data)?;
        self.push("upsample_linear", t, Op::Upsample { x, taps })
    }

    /// Non-overlapping max pooling over the last axis (kernel = stride).
    pub fn max_pool1d(&mut self, x: Var, kernel: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().unwrap_or(&0);
        if kernel == 0 || n < kernel {
            return Err(shape_err("max_pool1d", format!("{s:?} kernel {kernel}")));
        }
        let out_len = n / kernel;
        let src = self.value(x).data();
        let rows = src.len() / n;
        let mut data = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            for p in 0..out_len {
                let start = r * n + p * kernel;
                let mut best = start;
                for i in start + 1..start + kernel {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                data.push(src[best]);
                argmax.push(best);
            }
        }
        let mut shape = s;
        *shape.last_mut().expect("rank >= 1") = out_len;
        let t = Tensor::new(shape, data)?;
        self.push("max_pool1d", t, Op::MaxPool { x, argmax })
    }

    /// Mean squared error between two equally shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Affine layer `x @ w + b` for `x: [rows, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if !ls.is_empty() && ls.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NotScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        let mut seed = self.value(loss).clone();
        seed.data_mut()[0] = T::one();
        grads[loss.0] = Some(seed);
        let mut out = Gradients::with_len(self.max_param.map_or(0, |m| m + 1));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>], out: &mut Gradients<T>) {
        let shaped = |shape: &[usize], data: Vec<T>| Tensor::new(shape.to_vec(), data).expect("gradient shape");
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => out.accumulate(*id, g),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, g.data(), false, tb.data(), true, &mut da, false);
                    accumulate(grads, *a, shaped(ta.shape(), da));
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, ta.data(), true, g.data(), false, &mut db, false);
                    accumulate(grads, *b, shaped(tb.shape(), db));
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    let neg = g.data().iter().map(|&v| -v).collect();
                    accumulate(grads, *b, shaped(g.shape(), neg));
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = g.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
                    accumulate(grads, *a, shaped(g.shape(), d));
                }
                if self.wants(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(&x, &y)| x * y).collect();
                    accumulate(grads, *b, shaped(g.shape(), d));
                }
            }
            Op::AddBias(x, b) => {
                if self.wants(*b) {
                    let n = self.value(*b).len();
                    let mut db = vec![T::zero(); n];
                    for row in g.data().chunks_exact(n) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(grads, *b, shaped(&[n], db));
                }
                if self.wants(*x) {
                    accumulate(grads, *x, g);
                }
            }
            Op::Scale(x, c) => {
                let d = g.data().iter().map(|&v| v * *c).collect();
                accumulate(grads, *x, shaped(g.shape(), d));
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_split(g.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let ps = self.shape(*p);
                    let len = ps[*axis];
                    if self.wants(*p) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            d.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        accumulate(grads, *p, shaped(ps, d));
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, dim, inner) = axis_split(xs, *axis);
                let len = g.shape()[*axis];
                // Add into the region in place; a full-size temporary per slice
                // makes step-wise recurrences quadratic.
                let acc = grads[x.0].get_or_insert_with(|| Tensor::zeros(xs));
                let d = acc.data_mut();
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    let src = o * len * inner;
                    for (a, &v) in d[dst..dst + len * inner]
                        .iter_mut()
                        .zip(&g.data()[src..src + len * inner])
                    {
                        *a += v;
                    }
                }
            }
            Op::Reshape(x) => {
                let xs = self.shape(*x).to_vec();
                accumulate(grads, *x, g.reshaped(xs).expect("reshape gradient"));
            }
            Op::Sum(x) => {
                let xs = self.shape(*x);
                let d = vec![g.data()[0]; xs.iter().product()];
                accumulate(grads, *x, shaped(xs, d));
            }
            Op::Mean(x) => {
                let xs = self.shape(*x);
                let n: usize = xs.iter().product();
                let d = vec![g.data()[0] / T::of(n as f64); n];
                accumulate(grads, *x, shaped(xs, d));
            }
            Op::Relu(x) => {
                let y = node.value.data();
                let d = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| if yv > T::zero() { gv } else { T::zero() })
                    .collect();
                accumulate(grads, *x, shaped(g.shape(), d));
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let d = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                    .collect();
                accumulate(grads, *x, shaped(g.shape(), d));
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                let d = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| gv * (T::one() - yv * yv))
                    .collect();
                accumulate(grads, *x, shaped(g.shape(), d));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let tg = self.value(*gamma);
                let n = tg.len();
                if self.wants(*gamma) || self.wants(*beta) {
                    let mut dg = vec![T::zero(); n];
                    let mut db = vec![T::zero(); n];
                    for (grow, hrow) in g.data().chunks_exact(n).zip(normalized.chunks_exact(n)) {
                        for i in 0..n {
                            dg[i] += grow[i] * hrow[i];
                            db[i] += grow[i];
                        }
                    }
                    if self.wants(*gamma) {
                        accumulate(grads, *gamma, shaped(&[n], dg));
                    }
                    if self.wants(*beta) {
                        accumulate(grads, *beta, shaped(&[n], db));
                    }
                }
                if self.wants(*x) {
                    let nf = T::of(n as f64);
                    let mut dx = Vec::with_capacity(g.len());
                    let mut dh = vec![T::zero(); n];
                    for ((grow, hrow), &inv) in g.data().chunks_exact(n).zip(normalized.chunks_exact(n)).zip(inv_std) {
                        let mut sum_dh = T::zero();
                        let mut sum_dh_h = T::zero();
                        for i in 0..n {
                            dh[i] = grow[i] * tg.data()[i];
                            sum_dh += dh[i];
                            sum_dh_h += dh[i] * hrow[i];
                        }
                        for i in 0..n {
                            dx.push(inv / nf * (nf * dh[i] - sum_dh - hrow[i] * sum_dh_h));
                        }
                    }
                    accumulate(grads, *x, shaped(g.shape(), dx));
                }
            }
            Op::Dropout { x, mask } => {
                let d = g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect();
                accumulate(grads, *x, shaped(g.shape(), d));
            }
            Op::CausalConv { x, w, b, dilation } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let geom = ConvGeom {
                    batch: tx.shape()[0],
                    cin: tx.shape()[1],
                    time: tx.shape()[2],
                    cout: tw.shape()[0],
                    kernel: tw.shape()[2],
                    dilation: *dilation,
                };
                let in_block = geom.cin * geom.time;
                let out_block = geom.cout * geom.time;
                let ck = geom.cin * geom.kernel;
                if self.wants(*b) {
                    let mut db = vec![T::zero(); geom.cout];
                    for (i, row) in g.data().chunks_exact(geom.time).enumerate() {
                        db[i % geom.cout] += row.iter().copied().sum::<T>();
                    }
                    accumulate(grads, *b, shaped(&[geom.cout], db));
                }
                let want_w = self.wants(*w);
                let want_x = self.wants(*x);
                let mut dw = vec![T::zero(); tw.len()];
                let mut dx = if want_x { vec![T::zero(); tx.len()] } else { Vec::new() };
                let mut col = vec![T::zero(); ck * geom.time];
                let mut dcol = vec![T::zero(); ck * geom.time];
                for bi in 0..geom.batch {
                    let gb = &g.data()[bi * out_block..(bi + 1) * out_block];
                    if want_w {
                        geom.im2col(&tx.data()[bi * in_block..(bi + 1) * in_block], &mut col);
                        T::gemm(geom.cout, geom.time, ck, gb, false, &col, true, &mut dw, true);
                    }
                    if want_x {
                        T::gemm(ck, geom.cout, geom.time, tw.data(), true, gb, false, &mut dcol, false);
                        geom.col2im(&dcol, &mut dx[bi * in_block..(bi + 1) * in_block]);
                    }
                }
                if want_w {
                    accumulate(grads, *w, shaped(tw.shape(), dw));
                }
                if want_x {
                    accumulate(grads, *x, shaped(tx.shape(), dx));
                }
            }
            Op::Upsample { x, taps } => {
                let xs = self.shape(*x);
                let n = *xs.last().expect("rank >= 1");
                let len = taps.len();
                let mut d = vec![T::zero(); xs.iter().product()];
                for (drow, grow) in d.chunks_exact_mut(n).zip(g.data().chunks_exact(len)) {
                    for (&(i, frac), &gv) in taps.iter().zip(grow) {
                        drow[i] += gv * (T::one() - frac);
                        if i + 1 < n {
                            drow[i + 1] += gv * frac;
                        } else {
                            drow[i] += gv * frac;
                        }
                    }
                }
                accumulate(grads, *x, shaped(xs, d));
            }
            Op::MaxPool { x, argmax } => {
                let xs = self.shape(*x);
                let mut d = vec![T::zero(); xs.iter().product()];
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    d[src] += gv;
                }
                accumulate(grads, *x, shaped(xs, d));
            }
        }
    }
}

fn inputs<T>(op: &Op<T>) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Param(_) => Vec::new(),
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
            vec![*a, *b]
        }
        Op::Scale(x, _)
        | Op::Slice { x, .. }
        | Op::Reshape(x)
        | Op::Sum(x)
        | Op::Mean(x)
        | Op::Relu(x)
        | Op::Sigmoid(x)
        | Op::Tanh(x)
        | Op::Dropout { x, .. }
        | Op::Upsample { x, .. }
        | Op::MaxPool { x, .. } => vec![*x],
        Op::Concat { parts, .. } => parts.clone(),
        Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        Op::CausalConv { x, w, b, .. } => vec![*x, *w, *b],
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

struct ConvGeom {
    batch: usize,
    cin: usize,
    time: usize,
    cout: usize,
    kernel: usize,
    dilation: usize,
}

impl ConvGeom {
    fn lag(&self, tap: usize) -> usize {
        (self.kernel - 1 - tap) * self.dilation
    }

    /// `col[(c * kernel + j) * time + t] = x[c, t - lag(j)]`, zero before the start.
    fn im2col<T: Real>(&self, x: &[T], col: &mut [T]) {
        for c in 0..self.cin {
            let src = &x[c * self.time..(c + 1) * self.time];
            for j in 0..self.kernel {
                let lag = self.lag(j).min(self.time);
                let row = &mut col[(c * self.kernel + j) * self.time..][..self.time];
                row[..lag].iter_mut().for_each(|v| *v = T::zero());
                row[lag..].copy_from_slice(&src[..self.time - lag]);
            }
        }
    }

    fn col2im<T: Real>(&self, col: &[T], dx: &mut [T]) {
        for c in 0..self.cin {
            let dst = &mut dx[c * self.time..(c + 1) * self.time];
            for j in 0..self.kernel {
                let lag = self.lag(j).min(self.time);
                let row = &col[(c * self.kernel + j) * self.time..][..self.time];
                for (d, &v) in dst[..self.time - lag].iter_mut().zip(&row[lag..]) {
                    *d += v;
                }
            }
        }
    }
}

/// For each output point, the lower source index and the interpolation weight of the upper one.
fn interpolation_taps<T: Real>(n: usize, len: usize) -> Vec<(usize, T)> {
    (0..len)
        .map(|j| {
            if n == 1 || len == 1 {
                return (0, T::zero());
            }
            let pos = j as f64 * (n - 1) as f64 / (len - 1) as f64;
            let i = (pos.floor() as usize).min(n - 2);
            (i, T::of(pos - i as f64))
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}
