//! Reverse-mode recording of the fixed op set.
//!
//! Every op appends a node holding its forward value; [`Tape::backward`]
//! walks the nodes in reverse and applies the analytic adjoint of each.

use std::collections::BTreeMap;

use super::ops::{self, Activation, PoolMode};
use super::params::{GradStore, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv1d { x: Var, k: Var, stride: usize },
    Pool { x: Var, mode: PoolMode, argmax: Vec<usize> },
    Act { x: Var, kind: Activation },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    BroadcastRows(Var),
    ConcatCols(Var, Var),
    Reshape(Var),
    Mse { pred: Var, target: Tensor<T> },
    Bce { logits: Var, labels: Tensor<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    bound: BTreeMap<String, Var>,
}

/// Adjoints of every node reached from the loss.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf for the parameter at `path`. Repeated calls return the same node,
    /// so gradients from every use accumulate in one place.
    pub fn param(&mut self, params: &ParamSet<T>, path: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(path) {
            return Ok(v);
        }
        let value = params.get(path)?.clone();
        let v = self.push(value, Op::Leaf);
        self.bound.insert(path.to_string(), v);
        Ok(v)
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.bound.iter()
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    pub fn conv1d(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let y = ops::temporal_conv1d(self.value(x), self.value(k), stride)?;
        Ok(self.push(y, Op::Conv1d { x, k, stride }))
    }

    pub fn pool(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        let (y, argmax) = ops::pool_temporal(self.value(x), mode)?;
        Ok(self.push(y, Op::Pool { x, mode, argmax }))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let y = ops::activation(self.value(x), kind)?;
        Ok(self.push(y, Op::Act { x, kind }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(op, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let y = self.value(x).map(|v| v * c);
        Ok(self.push(y, Op::Scale(x, c)))
    }

    /// Concatenation of 1-D tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat of nothing".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 1 {
                return Err(Error::shape("concat", v.shape(), &[v.len()]));
            }
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length 1-D tensors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Invalid("stack of no rows".into()));
        }
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let v = self.value(r);
            if v.rank() != 1 || v.len() != width {
                return Err(Error::shape("stack_rows", v.shape(), &[width]));
            }
            data.extend_from_slice(v.data());
        }
        let y = Tensor::new(vec![rows.len(), width], data)?;
        Ok(self.push(y, Op::StackRows(rows.to_vec())))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let v = self.value(m);
        if v.rank() != 2 || i >= v.shape()[0] {
            return Err(Error::Invalid(format!("row {i} of tensor with shape {:?}", v.shape())));
        }
        let y = Tensor::vector(v.row(i).to_vec());
        Ok(self.push(y, Op::Row(m, i)))
    }

    /// Repeats a vector as `n` identical rows.
    pub fn broadcast_rows(&mut self, v: Var, n: usize) -> Result<Var> {
        let x = self.value(v);
        if x.rank() != 1 || n == 0 {
            return Err(Error::shape("broadcast_rows", x.shape(), &[n]));
        }
        let mut data = Vec::with_capacity(n * x.len());
        for _ in 0..n {
            data.extend_from_slice(x.data());
        }
        let y = Tensor::new(vec![n, x.len()], data)?;
        Ok(self.push(y, Op::BroadcastRows(v)))
    }

    /// Joins `[n, p]` and `[n, q]` into `[n, p + q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.shape()[0] != vb.shape()[0] {
            return Err(Error::shape("concat_cols", va.shape(), vb.shape()));
        }
        let (n, p, q) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut data = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            data.extend_from_slice(va.row(i));
            data.extend_from_slice(vb.row(i));
        }
        let y = Tensor::new(vec![n, p + q], data)?;
        Ok(self.push(y, Op::ConcatCols(a, b)))
    }

    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let y = v.clone().reshape(vec![v.len()])?;
        Ok(self.push(y, Op::Reshape(x)))
    }

    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let l = ops::mse_loss(self.value(pred), target)?;
        Ok(self.push(
            Tensor::scalar(l),
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    pub fn bce(&mut self, logits: Var, labels: &Tensor<T>) -> Result<Var> {
        let l = ops::bce_loss(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(l),
            Op::Bce {
                logits,
                labels: labels.clone(),
            },
        ))
    }

    /// Adjoints of all nodes with respect to the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Collects the adjoints of every bound parameter leaf.
    pub fn param_grads(&self, grads: &Gradients<T>) -> Result<GradStore<T>> {
        let mut store = GradStore::empty();
        for (path, &v) in &self.bound {
            match grads.wrt(v) {
                Some(g) => store.accumulate(path, g, T::one())?,
                None => store.accumulate(path, &Tensor::zeros(self.value(v).shape()), T::one())?,
            }
        }
        Ok(store)
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, p) = xv.as_matrix_dims();
                let q = wv.shape()[1];
                let (xd, wd) = (xv.data(), wv.data());
                let mut gx = vec![T::zero(); n * p];
                let mut gw = vec![T::zero(); p * q];
                for i in 0..n {
                    let grow = &gd[i * q..(i + 1) * q];
                    for k in 0..p {
                        let wrow = &wd[k * q..(k + 1) * q];
                        let mut s = T::zero();
                        for (&gj, &wj) in grow.iter().zip(wrow) {
                            s = s + gj * wj;
                        }
                        gx[i * p + k] = s;
                        let xik = xd[i * p + k];
                        for (gwj, &gj) in gw[k * q..(k + 1) * q].iter_mut().zip(grow) {
                            *gwj = *gwj + xik * gj;
                        }
                    }
                }
                accumulate(grads, *x, xv.shape(), gx);
                accumulate(grads, *w, wv.shape(), gw);
                if let Some(b) = b {
                    let mut gb = vec![T::zero(); q];
                    for i in 0..n {
                        for (gbj, &gj) in gb.iter_mut().zip(&gd[i * q..(i + 1) * q]) {
                            *gbj = *gbj + gj;
                        }
                    }
                    accumulate(grads, *b, &[q], gb);
                }
            }
            Op::Conv1d { x, k, stride } => {
                let xv = self.value(*x);
                let kv = self.value(*k);
                let (d, kw, c) = (xv.shape()[1], kv.shape()[0], kv.shape()[2]);
                let out_len = node.value.shape()[0];
                let (xd, kd) = (xv.data(), kv.data());
                let mut gx = vec![T::zero(); xv.len()];
                let mut gk = vec![T::zero(); kv.len()];
                for t in 0..out_len {
                    let grow = &gd[t * c..(t + 1) * c];
                    for j in 0..kw {
                        let r = t * stride + j;
                        for i in 0..d {
                            let base = (j * d + i) * c;
                            let krow = &kd[base..base + c];
                            let xv_ri = xd[r * d + i];
                            let mut s = T::zero();
                            for o in 0..c {
                                s = s + grow[o] * krow[o];
                                gk[base + o] = gk[base + o] + xv_ri * grow[o];
                            }
                            gx[r * d + i] = gx[r * d + i] + s;
                        }
                    }
                }
                accumulate(grads, *x, xv.shape(), gx);
                accumulate(grads, *k, kv.shape(), gk);
            }
            Op::Pool { x, mode, argmax } => {
                let xv = self.value(*x);
                let (len, d) = (xv.shape()[0], xv.shape()[1]);
                let mut gx = vec![T::zero(); len * d];
                match mode {
                    PoolMode::Mean => {
                        let n = T::from_usize(len).unwrap();
                        for t in 0..len {
                            for i in 0..d {
                                gx[t * d + i] = gd[i] / n;
                            }
                        }
                    }
                    PoolMode::Max => {
                        for (i, &t) in argmax.iter().enumerate() {
                            gx[t * d + i] = gd[i];
                        }
                    }
                }
                accumulate(grads, *x, xv.shape(), gx);
            }
            Op::Act { x, kind } => {
                let xv = self.value(*x);
                let yd = node.value.data();
                let gx: Vec<T> = match kind {
                    Activation::Relu => xv
                        .data()
                        .iter()
                        .zip(gd)
                        .map(|(&xi, &gi)| if xi > T::zero() { gi } else { T::zero() })
                        .collect(),
                    Activation::Sigmoid => yd
                        .iter()
                        .zip(gd)
                        .map(|(&y, &gi)| gi * y * (T::one() - y))
                        .collect(),
                    Activation::Tanh => yd
                        .iter()
                        .zip(gd)
                        .map(|(&y, &gi)| gi * (T::one() - y * y))
                        .collect(),
                };
                accumulate(grads, *x, xv.shape(), gx);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), gd.to_vec());
                accumulate(grads, *b, g.shape(), gd.to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.shape(), gd.to_vec());
                accumulate(grads, *b, g.shape(), gd.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let ga = gd.iter().zip(bd).map(|(&gi, &bi)| gi * bi).collect();
                let gb = gd.iter().zip(ad).map(|(&gi, &ai)| gi * ai).collect();
                accumulate(grads, *a, g.shape(), ga);
                accumulate(grads, *b, g.shape(), gb);
            }
            Op::Scale(x, c) => {
                accumulate(grads, *x, g.shape(), gd.iter().map(|&v| v * *c).collect());
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    accumulate(grads, p, &[n], gd[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::StackRows(rows) => {
                let w = node.value.shape()[1];
                for (i, &r) in rows.iter().enumerate() {
                    accumulate(grads, r, &[w], gd[i * w..(i + 1) * w].to_vec());
                }
            }
            Op::Row(m, i) => {
                let mv = self.value(*m);
                let w = mv.shape()[1];
                let mut gm = vec![T::zero(); mv.len()];
                gm[i * w..(i + 1) * w].copy_from_slice(gd);
                accumulate(grads, *m, mv.shape(), gm);
            }
            Op::BroadcastRows(v) => {
                let w = self.value(*v).len();
                let mut gv = vec![T::zero(); w];
                for row in gd.chunks_exact(w) {
                    for (a, &b) in gv.iter_mut().zip(row) {
                        *a = *a + b;
                    }
                }
                accumulate(grads, *v, &[w], gv);
            }
            Op::ConcatCols(a, b) => {
                let (p, q) = (self.value(*a).shape()[1], self.value(*b).shape()[1]);
                let n = node.value.shape()[0];
                let mut ga = Vec::with_capacity(n * p);
                let mut gb = Vec::with_capacity(n * q);
                for row in gd.chunks_exact(p + q) {
                    ga.extend_from_slice(&row[..p]);
                    gb.extend_from_slice(&row[p..]);
                }
                accumulate(grads, *a, &[n, p], ga);
                accumulate(grads, *b, &[n, q], gb);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(grads, *x, &shape, gd.to_vec());
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred);
                let n = T::from_usize(pv.len()).unwrap();
                let s = gd[0] * T::lit(2.0) / n;
                let gp = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| s * (p - t))
                    .collect();
                accumulate(grads, *pred, pv.shape(), gp);
            }
            Op::Bce { logits, labels } => {
                let lv = self.value(*logits);
                let n = T::from_usize(lv.len()).unwrap();
                let s = gd[0] / n;
                let gl = lv
                    .data()
                    .iter()
                    .zip(labels.data())
                    .map(|(&l, &y)| s * (ops::sigmoid_unclamped(l) - y))
                    .collect();
                accumulate(grads, *logits, lv.shape(), gl);
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, shape: &[usize], data: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(data) {
                *a = *a + b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), data).expect("adjoint shape"));
        }
    }
}
