//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation evaluates eagerly and appends a node to the [`Graph`].
//! Nodes only reference earlier nodes, so insertion order is a valid
//! topological order and the backward pass is a single reverse sweep.
//! A node carries gradient only if one of its ancestors is a
//! differentiable leaf; everything else is skipped during backward.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    Square,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Elu => {
                if v > 0.0 {
                    v
                } else {
                    v.exp_m1()
                }
            }
            Activation::Square => v * v,
        }
    }

    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if v > 0.0 {
                    1.0
                } else {
                    v.exp()
                }
            }
            Activation::Square => 2.0 * v,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            "square" => Ok(Activation::Square),
            other => Err(Error::param(format!("unknown activation {other:?}"))),
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    ConvTemporal {
        x: Var,
        kernels: Var,
        stride: usize,
    },
    ConvSpatial {
        x: Var,
        mix: Var,
    },
    Activation(Var, Activation),
    MeanPool {
        x: Var,
        window: usize,
        stride: usize,
    },
    Reshape(Var),
    Gather {
        src: Var,
        index: Vec<usize>,
    },
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Softmax(Var),
    Mse(Var, Var),
    RowNorms(Var),
    Mean(Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`, or a zero tensor if the output does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub(crate) fn take(&mut self, v: Var) -> Vec<f64> {
        let numel = self.shapes[v.0].iter().product();
        self.grads[v.0].take().unwrap_or_else(|| vec![0.0; numel])
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Tensor, op: Op, parents: &[Var], what: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "{what} produced a non-finite value"
            )));
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, &bv) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        self.push_checked(t, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::dim(format!("transpose needs a matrix, got {s:?}")));
        }
        let (m, n) = (s[0], s[1]);
        let av = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        self.push_checked(t, Op::Transpose(a), &[a], "transpose")
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sa.len() != 2 || sr.iter().product::<usize>() != sa[1] {
            return Err(Error::dim(format!("add_row {sa:?} + {sr:?}")));
        }
        let n = sa[1];
        let rv = self.value(row).data().to_vec();
        let mut t = self.value(a).clone();
        for chunk in t.data_mut().chunks_mut(n) {
            for (o, r) in chunk.iter_mut().zip(&rv) {
                *o += r;
            }
        }
        self.push_checked(t, Op::AddRow(a, row), &[a, row], "add_row")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut t = self.value(a).clone();
        for (o, v) in t.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        self.push_checked(t, Op::Add(a, b), &[a, b], "add")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = self.value(a).map(|v| v * factor);
        self.push_checked(t, Op::Scale(a, factor), &[a], "scale")
    }

    /// Slides each of `f` kernels along the time axis of every channel.
    ///
    /// `x: [b, c, t]`, `kernels: [f, 1, k]` gives `[b, c*f, t']` with
    /// output channel `ci*f + fi` and `t' = (t - k) / stride + 1`.
    pub fn conv_temporal(&mut self, x: Var, kernels: Var, stride: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernels).to_vec());
        if sx.len() != 3 || sk.len() != 3 || sk[1] != 1 {
            return Err(Error::dim(format!("conv_temporal x {sx:?} kernels {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::param("conv_temporal stride must be >= 1"));
        }
        let (b, c, t) = (sx[0], sx[1], sx[2]);
        let (f, k) = (sk[0], sk[2]);
        if k > t {
            return Err(Error::dim(format!(
                "kernel length {k} exceeds signal length {t}"
            )));
        }
        let tp = (t - k) / stride + 1;
        let xv = self.value(x).data();
        let kv = self.value(kernels).data();
        let mut out = vec![0.0; b * c * f * tp];
        for bc in 0..b * c {
            let xs = &xv[bc * t..(bc + 1) * t];
            for fi in 0..f {
                let o = &mut out[(bc * f + fi) * tp..(bc * f + fi + 1) * tp];
                let ker = &kv[fi * k..(fi + 1) * k];
                if stride == 1 {
                    for (kk, &w) in ker.iter().enumerate() {
                        for (ov, &xv) in o.iter_mut().zip(&xs[kk..kk + tp]) {
                            *ov += w * xv;
                        }
                    }
                } else {
                    for (j, ov) in o.iter_mut().enumerate() {
                        let base = j * stride;
                        *ov = ker
                            .iter()
                            .zip(&xs[base..base + k])
                            .map(|(w, v)| w * v)
                            .sum();
                    }
                }
            }
        }
        let t = Tensor::new(vec![b, c * f, tp], out)?;
        self.push_checked(
            t,
            Op::ConvTemporal { x, kernels, stride },
            &[x, kernels],
            "conv_temporal",
        )
    }

    /// Linear mixing across channels: `x: [b, c, t]`, `mix: [g, c]` gives `[b, g, t]`.
    pub fn conv_spatial(&mut self, x: Var, mix: Var) -> Result<Var> {
        let (sx, sm) = (self.shape(x).to_vec(), self.shape(mix).to_vec());
        if sx.len() != 3 || sm.len() != 2 || sm[1] != sx[1] {
            return Err(Error::dim(format!("conv_spatial x {sx:?} mix {sm:?}")));
        }
        let (b, c, t) = (sx[0], sx[1], sx[2]);
        let g = sm[0];
        let xv = self.value(x).data();
        let mv = self.value(mix).data();
        let mut out = vec![0.0; b * g * t];
        for bi in 0..b {
            let xb = &xv[bi * c * t..(bi + 1) * c * t];
            for gi in 0..g {
                let o = &mut out[(bi * g + gi) * t..(bi * g + gi + 1) * t];
                for ci in 0..c {
                    let w = mv[gi * c + ci];
                    for (ov, &v) in o.iter_mut().zip(&xb[ci * t..(ci + 1) * t]) {
                        *ov += w * v;
                    }
                }
            }
        }
        let t = Tensor::new(vec![b, g, t], out)?;
        self.push_checked(t, Op::ConvSpatial { x, mix }, &[x, mix], "conv_spatial")
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let t = self.value(x).map(|v| kind.apply(v));
        self.push_checked(t, Op::Activation(x, kind), &[x], "activation")
    }

    /// Mean over sliding windows of the last (time) axis of `[b, c, t]`.
    pub fn mean_pool_time(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(Error::dim(format!(
                "mean_pool_time needs [b, c, t], got {sx:?}"
            )));
        }
        if window == 0 || stride == 0 {
            return Err(Error::param("pool window and stride must be >= 1"));
        }
        let (b, c, t) = (sx[0], sx[1], sx[2]);
        if window > t {
            return Err(Error::dim(format!(
                "pool window {window} exceeds length {t}"
            )));
        }
        let tp = (t - window) / stride + 1;
        let inv = 1.0 / window as f64;
        let xv = self.value(x).data();
        let mut out = vec![0.0; b * c * tp];
        for (row, o) in xv.chunks(t).zip(out.chunks_mut(tp)) {
            for (j, ov) in o.iter_mut().enumerate() {
                let base = j * stride;
                *ov = row[base..base + window].iter().sum::<f64>() * inv;
            }
        }
        let t = Tensor::new(vec![b, c, tp], out)?;
        self.push_checked(
            t,
            Op::MeanPool { x, window, stride },
            &[x],
            "mean_pool_time",
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        self.push_checked(t, Op::Reshape(x), &[x], "reshape")
    }

    /// Picks rows of `src` (first axis) by `index`.
    pub fn gather(&mut self, src: Var, index: &[usize]) -> Result<Var> {
        let s = self.shape(src).to_vec();
        if index.is_empty() {
            return Err(Error::dim("gather with empty index"));
        }
        let rows = s[0];
        let stride: usize = s[1..].iter().product();
        let sv = self.value(src).data();
        let mut out = Vec::with_capacity(index.len() * stride);
        for &i in index {
            if i >= rows {
                return Err(Error::label(format!(
                    "gather index {i} out of range {rows}"
                )));
            }
            out.extend_from_slice(&sv[i * stride..(i + 1) * stride]);
        }
        let mut shape = s;
        shape[0] = index.len();
        let t = Tensor::new(shape, out)?;
        self.push_checked(
            t,
            Op::Gather {
                src,
                index: index.to_vec(),
            },
            &[src],
            "gather",
        )
    }

    /// Batch-mean cross-entropy of `logits: [b, K]` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::dim(format!(
                "cross-entropy logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let (b, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::label(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; b * k];
        let mut total = 0.0;
        for i in 0..b {
            let row = &lv[i * k..(i + 1) * k];
            let (lse, p) = log_softmax_row(row);
            total += lse - row[labels[i]];
            probs[i * k..(i + 1) * k].copy_from_slice(&p);
        }
        let t = Tensor::scalar(total / b as f64);
        let op = Op::SoftmaxCe {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        self.push_checked(t, op, &[logits], "softmax_cross_entropy")
    }

    /// Row-wise softmax of `[b, K]` logits.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!("softmax needs [b, K], got {s:?}")));
        }
        let k = s[1];
        let mut out = Vec::with_capacity(s[0] * k);
        for row in self.value(logits).data().chunks(k) {
            out.extend(log_softmax_row(row).1);
        }
        let t = Tensor::new(s, out)?;
        self.push_checked(t, Op::Softmax(logits), &[logits], "softmax")
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "mse {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let n = av.len() as f64;
        let sum: f64 = av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push_checked(Tensor::scalar(sum / n), Op::Mse(a, b), &[a, b], "mse")
    }

    /// Euclidean norm of each slice along the first axis; `[n, ...]` gives `[n]`.
    pub fn row_norms(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let n = s[0];
        let stride: usize = s[1..].iter().product();
        let norms: Vec<f64> = self
            .value(x)
            .data()
            .chunks(stride)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let t = Tensor::new(vec![n], norms)?;
        self.push_checked(t, Op::RowNorms(x), &[x], "row_norms")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let m = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push_checked(Tensor::scalar(m), Op::Mean(x), &[x], "mean")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push_checked(Tensor::scalar(s), Op::Sum(x), &[x], "sum")
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.nodes[output.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[output.0].needs_grad {
            grads[output.0] = Some(vec![1.0]);
        }
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_deref() else {
                continue;
            };
            self.propagate(node, g, lower);
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    /// Gradients of `output` with respect to each leaf in `wrt`.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        for &w in wrt {
            let node = &self.nodes[w.0];
            if !matches!(node.op, Op::Leaf) || !node.needs_grad {
                return Err(Error::Contract(format!(
                    "node {} is not a differentiable leaf",
                    w.0
                )));
            }
        }
        let grads = self.backward(output)?;
        Ok(wrt.iter().map(|&w| grads.get(w)).collect())
    }

    fn slot<'a>(&self, lower: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(lower[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]))
    }

    fn propagate(&self, node: &Node, g: &[f64], lower: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if let Some(ga) = self.slot(lower, *a) {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv.data()[p * n..(p + 1) * n];
                            ga[i * k + p] += gi.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gb) = self.slot(lower, *b) {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av.data()[i * k + p];
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *o += aip * gv;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                let (m, n) = (s[0], s[1]);
                if let Some(ga) = self.slot(lower, *a) {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::AddRow(a, row) => {
                let n = self.shape(*a)[1];
                if let Some(ga) = self.slot(lower, *a) {
                    accumulate(ga, g);
                }
                if let Some(gr) = self.slot(lower, *row) {
                    for chunk in g.chunks(n) {
                        accumulate(gr, chunk);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(lower, *a) {
                    accumulate(ga, g);
                }
                if let Some(gb) = self.slot(lower, *b) {
                    accumulate(gb, g);
                }
            }
            Op::Scale(a, factor) => {
                if let Some(ga) = self.slot(lower, *a) {
                    for (o, &v) in ga.iter_mut().zip(g) {
                        *o += factor * v;
                    }
                }
            }
            Op::ConvTemporal { x, kernels, stride } => {
                let (sx, sk) = (self.shape(*x), self.shape(*kernels));
                let (b, c, t) = (sx[0], sx[1], sx[2]);
                let (f, k) = (sk[0], sk[2]);
                let tp = (t - k) / stride + 1;
                let xv = self.value(*x).data();
                let kv = self.value(*kernels).data();
                if let Some(gx) = self.slot(lower, *x) {
                    for bc in 0..b * c {
                        let gxs = &mut gx[bc * t..(bc + 1) * t];
                        for fi in 0..f {
                            let go = &g[(bc * f + fi) * tp..(bc * f + fi + 1) * tp];
                            let ker = &kv[fi * k..(fi + 1) * k];
                            for (kk, &w) in ker.iter().enumerate() {
                                if *stride == 1 {
                                    for (o, &gv) in gxs[kk..kk + tp].iter_mut().zip(go) {
                                        *o += w * gv;
                                    }
                                } else {
                                    for (j, &gv) in go.iter().enumerate() {
                                        gxs[j * stride + kk] += w * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(gk) = self.slot(lower, *kernels) {
                    for bc in 0..b * c {
                        let xs = &xv[bc * t..(bc + 1) * t];
                        for fi in 0..f {
                            let go = &g[(bc * f + fi) * tp..(bc * f + fi + 1) * tp];
                            for kk in 0..k {
                                let acc: f64 = if *stride == 1 {
                                    go.iter().zip(&xs[kk..kk + tp]).map(|(a, b)| a * b).sum()
                                } else {
                                    go.iter()
                                        .enumerate()
                                        .map(|(j, gv)| gv * xs[j * stride + kk])
                                        .sum()
                                };
                                gk[fi * k + kk] += acc;
                            }
                        }
                    }
                }
            }
            Op::ConvSpatial { x, mix } => {
                let (sx, sm) = (self.shape(*x), self.shape(*mix));
                let (b, c, t) = (sx[0], sx[1], sx[2]);
                let gch = sm[0];
                let xv = self.value(*x).data();
                let mv = self.value(*mix).data();
                if let Some(gx) = self.slot(lower, *x) {
                    for bi in 0..b {
                        for gi in 0..gch {
                            let go = &g[(bi * gch + gi) * t..(bi * gch + gi + 1) * t];
                            for ci in 0..c {
                                let w = mv[gi * c + ci];
                                let dst = &mut gx[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                                for (o, &gv) in dst.iter_mut().zip(go) {
                                    *o += w * gv;
                                }
                            }
                        }
                    }
                }
                if let Some(gm) = self.slot(lower, *mix) {
                    for bi in 0..b {
                        for gi in 0..gch {
                            let go = &g[(bi * gch + gi) * t..(bi * gch + gi + 1) * t];
                            for ci in 0..c {
                                let xs = &xv[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                                gm[gi * c + ci] +=
                                    go.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
            }
            Op::Activation(x, kind) => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.slot(lower, *x) {
                    for ((o, &gv), &v) in gx.iter_mut().zip(g).zip(xv) {
                        *o += gv * kind.derivative(v);
                    }
                }
            }
            Op::MeanPool { x, window, stride } => {
                let t = self.shape(*x)[2];
                let tp = (t - window) / stride + 1;
                let inv = 1.0 / *window as f64;
                if let Some(gx) = self.slot(lower, *x) {
                    for (row, go) in gx.chunks_mut(t).zip(g.chunks(tp)) {
                        for (j, &gv) in go.iter().enumerate() {
                            let base = j * stride;
                            for o in &mut row[base..base + window] {
                                *o += gv * inv;
                            }
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.slot(lower, *x) {
                    accumulate(gx, g);
                }
            }
            Op::Gather { src, index } => {
                let stride: usize = self.shape(*src)[1..].iter().product();
                if let Some(gs) = self.slot(lower, *src) {
                    for (r, &i) in index.iter().enumerate() {
                        accumulate(
                            &mut gs[i * stride..(i + 1) * stride],
                            &g[r * stride..(r + 1) * stride],
                        );
                    }
                }
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / labels.len() as f64;
                if let Some(gl) = self.slot(lower, *logits) {
                    for (i, &y) in labels.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            gl[i * k + j] += scale * (probs[i * k + j] - onehot);
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                let k = self.shape(*x)[1];
                let p = node.value.data();
                if let Some(gx) = self.slot(lower, *x) {
                    for ((gr, pr), go) in gx.chunks_mut(k).zip(p.chunks(k)).zip(g.chunks(k)) {
                        let dot: f64 = pr.iter().zip(go).map(|(a, b)| a * b).sum();
                        for ((o, &pv), &gv) in gr.iter_mut().zip(pr).zip(go) {
                            *o += pv * (gv - dot);
                        }
                    }
                }
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let scale = 2.0 * g[0] / av.len() as f64;
                if let Some(ga) = self.slot(lower, *a) {
                    for ((o, x), y) in ga.iter_mut().zip(av).zip(bv) {
                        *o += scale * (x - y);
                    }
                }
                if let Some(gb) = self.slot(lower, *b) {
                    for ((o, x), y) in gb.iter_mut().zip(av).zip(bv) {
                        *o -= scale * (x - y);
                    }
                }
            }
            Op::RowNorms(x) => {
                let xv = self.value(*x).data();
                let norms = node.value.data();
                let stride = xv.len() / norms.len();
                if let Some(gx) = self.slot(lower, *x) {
                    for (r, &norm) in norms.iter().enumerate() {
                        // Subgradient 0 at the kink.
                        if norm == 0.0 {
                            continue;
                        }
                        let s = g[r] / norm;
                        for (o, &v) in gx[r * stride..(r + 1) * stride]
                            .iter_mut()
                            .zip(&xv[r * stride..])
                        {
                            *o += s * v;
                        }
                    }
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel() as f64;
                if let Some(gx) = self.slot(lower, *x) {
                    let s = g[0] / n;
                    gx.iter_mut().for_each(|o| *o += s);
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.slot(lower, *x) {
                    gx.iter_mut().for_each(|o| *o += g[0]);
                }
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

/// Returns `(log-sum-exp, softmax)` of one row using max subtraction.
pub(crate) fn log_softmax_row(row: &[f64]) -> (f64, Vec<f64>) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let lse = max + z.ln();
    (lse, exps.into_iter().map(|e| e / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let i = g.constant(Tensor::identity(2));
        let p = g.matmul(a, i).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let r = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let c = g.constant(t(&[2, 1], &[3.0, 4.0]));
        let p = g.matmul(r, c).unwrap();
        assert_eq!(g.value(p).data(), &[11.0]);
        assert!(matches!(g.matmul(a, r), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv_temporal_cases() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let id = g.constant(t(&[1, 1, 1], &[1.0]));
        let y = g.conv_temporal(x, id, 1).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
        let diff = g.constant(t(&[1, 1, 2], &[1.0, -1.0]));
        let y = g.conv_temporal(x, diff, 1).unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, -1.0, -1.0]);
        let long = g.constant(Tensor::zeros(&[1, 1, 5]));
        assert!(matches!(
            g.conv_temporal(x, long, 1),
            Err(Error::Dimension(_))
        ));
        let y = g.conv_temporal(x, diff, 2).unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, -1.0]);
    }

    #[test]
    fn conv_spatial_cases() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2, 3], &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]));
        let id = g.constant(Tensor::identity(2));
        let y = g.conv_spatial(x, id).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let sum = g.constant(t(&[1, 2], &[1.0, 1.0]));
        let y = g.conv_spatial(x, sum).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 3.0, 3.0]);
        let bad = g.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(g.conv_spatial(x, bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn activations_and_pooling() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let r = g.activation(x, Activation::Relu).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.constant(Tensor::from_vec(vec![-2.0, 3.0]));
        let sq = g.activation(s, Activation::Square).unwrap();
        assert_eq!(g.value(sq).data(), &[4.0, 9.0]);
        assert!((Activation::Elu.derivative(-1.0) - (-1.0f64).exp()).abs() < 1e-15);

        let x = g.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let p = g.mean_pool_time(x, 4, 4).unwrap();
        assert_eq!(g.value(p).data(), &[2.5]);
        let p = g.mean_pool_time(x, 1, 1).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            g.mean_pool_time(x, 5, 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn losses() {
        let mut g = Graph::new();
        let l = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let ce = g.softmax_cross_entropy(l, &[0]).unwrap();
        assert!((g.value(ce).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let l = g.constant(t(&[1, 2], &[1000.0, -1000.0]));
        let ce = g.softmax_cross_entropy(l, &[0]).unwrap();
        assert_eq!(g.value(ce).item(), 0.0);
        assert!(matches!(
            g.softmax_cross_entropy(l, &[2]),
            Err(Error::Label(_))
        ));

        let a = g.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let b = g.constant(Tensor::from_vec(vec![3.0, 2.0]));
        let m = g.mse(a, b).unwrap();
        assert_eq!(g.value(m).item(), 2.0);
        let m = g.mse(a, a).unwrap();
        assert_eq!(g.value(m).item(), 0.0);
        let c = g.constant(Tensor::from_vec(vec![1.0]));
        assert!(matches!(g.mse(a, c), Err(Error::Dimension(_))));
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let other = g.param(Tensor::from_vec(vec![5.0]));
        let sq = g.activation(x, Activation::Square).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.grad(s, &[x, other]).unwrap();
        assert_eq!(grads[0].data(), &[2.0, 4.0, 6.0]);
        assert_eq!(grads[1].data(), &[0.0]);
        assert!(matches!(g.backward(sq), Err(Error::Contract(_))));
    }

    #[test]
    fn row_norm_gradient_is_zero_at_origin() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 3]));
        let n = g.row_norms(x).unwrap();
        let s = g.sum(n).unwrap();
        let grads = g.grad(s, &[x]).unwrap();
        assert!(grads[0].data().iter().all(|&v| v == 0.0));
    }
}
