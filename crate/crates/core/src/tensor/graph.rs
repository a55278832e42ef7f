//! Reverse-mode automatic differentiation over feature matrices.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order, so [`Graph::backward`] is a single reverse sweep that
//! visits each record once. Stop-gradient nodes copy their input value and
//! have no parents in the backward sweep.

use std::sync::Arc;

use rustc_hash::FxHashMap;

use super::kernel::{conv_apply, conv_backward, KernelMap};
use super::matrix::{gemm, Matrix};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    StopGradient,
    Conv {
        input: Var,
        weight: Var,
        map: Arc<KernelMap>,
        transpose: bool,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Relu(Var),
    Add(Var, Var),
    Concat(Var, Var),
    ChannelNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    GatherRows {
        input: Var,
        rows: Arc<Vec<u32>>,
    },
    PairNegCosine {
        p: Var,
        z: Var,
        pairs: Arc<Vec<(u32, u32)>>,
        eps: f64,
    },
    WeightedSum(Vec<(Var, f64)>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// One differentiation record; confined to a single training step.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: FxHashMap<ParamId, Var>,
    stop_values: Vec<Var>,
    frozen: Option<Vec<Matrix>>,
}

/// Gradients from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient w.r.t. a node; `None` when no gradient reached it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].as_ref()
    }

    /// Parameter gradients in ascending id order. Parameters the loss does
    /// not depend on are absent.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.params
            .iter()
            .filter_map(|(id, v)| self.nodes[v.0].as_ref().map(|g| (*id, g)))
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.nodes[v.0].as_ref())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph whose stop-gradient nodes emit the given values (in creation
    /// order) instead of their inputs. Used to differentiate numerically with
    /// the stopped branches held constant.
    pub fn with_frozen_stop_gradients(values: Vec<Matrix>) -> Self {
        Self {
            frozen: Some(values),
            ..Self::default()
        }
    }

    /// Values emitted by every stop-gradient node so far, in creation order.
    pub fn stop_gradient_values(&self) -> Vec<Matrix> {
        self.stop_values.iter().map(|v| self.nodes[v.0].value.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Differentiable leaf that is not backed by a [`ParamStore`] entry.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, true)
    }

    /// Leaf for a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// Forward identity; contributes no gradient to anything upstream.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let k = self.stop_values.len();
        let value = match &self.frozen {
            Some(vals) => vals
                .get(k)
                .cloned()
                .unwrap_or_else(|| self.nodes[x.0].value.clone()),
            None => self.nodes[x.0].value.clone(),
        };
        let v = self.push(value, Op::StopGradient, false);
        self.stop_values.push(v);
        v
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn conv(&mut self, input: Var, weight: Var, map: Arc<KernelMap>) -> Result<Var> {
        self.conv_impl(input, weight, map, false)
    }

    /// Adjoint of [`Graph::conv`] with the same weight layout.
    pub fn conv_transpose(&mut self, input: Var, weight: Var, map: Arc<KernelMap>) -> Result<Var> {
        self.conv_impl(input, weight, map, true)
    }

    fn conv_impl(&mut self, input: Var, weight: Var, map: Arc<KernelMap>, transpose: bool) -> Result<Var> {
        let value = conv_apply(self.value(input), self.value(weight), &map, transpose)?;
        let ng = self.any_grad(&[input, weight]);
        Ok(self.push(
            value,
            Op::Conv {
                input,
                weight,
                map,
                transpose,
            },
            ng,
        ))
    }

    /// Per-row affine map `x W + b` (a 1x..x1 convolution).
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        if x.cols() != w.rows() {
            return Err(Error::ChannelMismatch {
                expected: w.rows(),
                got: x.cols(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), w.cols());
        gemm(x.rows(), x.cols(), w.cols(), x.data(), false, w.data(), false, out.data_mut(), 0.0);
        if let Some(b) = bias {
            let b = self.value(b);
            if b.shape() != (1, w.cols()) {
                return Err(Error::ChannelMismatch {
                    expected: w.cols(),
                    got: b.cols(),
                });
            }
            let bias = b.row(0).to_vec();
            for r in 0..out.rows() {
                for (o, bv) in out.row_mut(r).iter_mut().zip(&bias) {
                    *o += bv;
                }
            }
        }
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let ng = self.any_grad(&deps);
        Ok(self.push(out, Op::Linear { input, weight, bias }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.any_grad(&[x]);
        self.push(value, Op::Relu(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::CoordinateMismatch);
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Channel concatenation of two row-aligned matrices.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(Error::CoordinateMismatch);
        }
        let mut value = Matrix::zeros(x.rows(), x.cols() + y.cols());
        for r in 0..x.rows() {
            let row = value.row_mut(r);
            row[..x.cols()].copy_from_slice(x.row(r));
            row[x.cols()..].copy_from_slice(y.row(r));
        }
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat(a, b), ng))
    }

    /// Zero-mean, unit-variance per channel over all rows.
    pub fn channel_norm(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        let mut value = Matrix::zeros(n, c);
        let mut inv_std = vec![0.0; c];
        for (j, inv) in inv_std.iter_mut().enumerate() {
            let mean = (0..n).map(|r| xv.get(r, j)).sum::<f64>() / n.max(1) as f64;
            let var = (0..n).map(|r| (xv.get(r, j) - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
            *inv = 1.0 / (var + eps).sqrt();
            for r in 0..n {
                value.set(r, j, (xv.get(r, j) - mean) * *inv);
            }
        }
        let ng = self.any_grad(&[x]);
        self.push(value, Op::ChannelNorm { input: x, inv_std }, ng)
    }

    pub fn gather_rows(&mut self, x: Var, rows: Arc<Vec<u32>>) -> Result<Var> {
        let xv = self.value(x);
        let mut value = Matrix::zeros(rows.len(), xv.cols());
        for (o, &r) in rows.iter().enumerate() {
            let r = r as usize;
            if r >= xv.rows() {
                return Err(Error::InvalidArgument(format!("gather row {r} out of range")));
            }
            value.row_mut(o).copy_from_slice(xv.row(r));
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(value, Op::GatherRows { input: x, rows }, ng))
    }

    /// Scalar `sum over (a, b) of D(p[a], z[b])`, with
    /// `D(p, z) = -(p . z) / (|p| |z|)` with each norm clamped below at `eps`.
    pub fn pair_neg_cosine(&mut self, p: Var, z: Var, pairs: Arc<Vec<(u32, u32)>>, eps: f64) -> Result<Var> {
        let (pv, zv) = (self.value(p), self.value(z));
        if pv.cols() != zv.cols() {
            return Err(Error::ChannelMismatch {
                expected: pv.cols(),
                got: zv.cols(),
            });
        }
        let mut total = 0.0;
        for &(a, b) in pairs.iter() {
            let (a, b) = (a as usize, b as usize);
            if a >= pv.rows() || b >= zv.rows() {
                return Err(Error::InvalidArgument(format!("pair ({a}, {b}) out of range")));
            }
            total += neg_cos_eps(pv.row(a), zv.row(b), eps);
        }
        let ng = self.any_grad(&[p, z]);
        Ok(self.push(Matrix::scalar(total), Op::PairNegCosine { p, z, pairs, eps }, ng))
    }

    /// Scalar `sum of w * x` over scalar terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            let m = self.value(v);
            if m.shape() != (1, 1) {
                return Err(Error::NonScalarLoss {
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
            total += w * m.get(0, 0);
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let ng = self.any_grad(&vars);
        Ok(self.push(Matrix::scalar(total), Op::WeightedSum(terms.to_vec()), ng))
    }

    /// Sum of all entries.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let ng = self.any_grad(&[x]);
        self.push(Matrix::scalar(total), Op::Sum(x), ng)
    }

    /// Reverse sweep from a scalar node. Accumulation order is fixed by node
    /// order, so identical graphs give bit-identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Matrix::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params: Vec<(ParamId, Var)> = self.params.iter().map(|(k, v)| (*k, *v)).collect();
        params.sort();
        Ok(Gradients { nodes: grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Constant | Op::Param | Op::StopGradient => {}
            Op::Conv {
                input,
                weight,
                map,
                transpose,
            } => {
                let (dx, dw) = conv_backward(
                    self.value(*input),
                    self.value(*weight),
                    map,
                    *transpose,
                    g,
                    self.needs_grad(*input),
                    self.needs_grad(*weight),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *input, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *weight, dw);
                }
            }
            Op::Linear { input, weight, bias } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                if self.needs_grad(*input) {
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    gemm(g.rows(), w.cols(), w.rows(), g.data(), false, w.data(), true, dx.data_mut(), 0.0);
                    self.accumulate(grads, *input, dx);
                }
                if self.needs_grad(*weight) {
                    let mut dw = Matrix::zeros(w.rows(), w.cols());
                    gemm(w.rows(), x.rows(), w.cols(), x.data(), true, g.data(), false, dw.data_mut(), 0.0);
                    self.accumulate(grads, *weight, dw);
                }
                if let Some(b) = bias {
                    if self.needs_grad(*b) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        self.accumulate(grads, *b, db);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Concat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut ga = Matrix::zeros(g.rows(), ca);
                let mut gb = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::ChannelNorm { input, inv_std } => {
                let y = &node.value;
                let (n, c) = y.shape();
                let mut dx = Matrix::zeros(n, c);
                for (j, &inv) in inv_std.iter().enumerate() {
                    let mean_g = (0..n).map(|r| g.get(r, j)).sum::<f64>() / n as f64;
                    let mean_gy = (0..n).map(|r| g.get(r, j) * y.get(r, j)).sum::<f64>() / n as f64;
                    for r in 0..n {
                        dx.set(r, j, inv * (g.get(r, j) - mean_g - y.get(r, j) * mean_gy));
                    }
                }
                self.accumulate(grads, *input, dx);
            }
            Op::GatherRows { input, rows } => {
                let xv = self.value(*input);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                for (o, &r) in rows.iter().enumerate() {
                    for (d, v) in dx.row_mut(r as usize).iter_mut().zip(g.row(o)) {
                        *d += v;
                    }
                }
                self.accumulate(grads, *input, dx);
            }
            Op::PairNegCosine { p, z, pairs, eps } => {
                let upstream = g.get(0, 0);
                let (pv, zv) = (self.value(*p), self.value(*z));
                let need_p = self.needs_grad(*p);
                let need_z = self.needs_grad(*z);
                let mut dp = need_p.then(|| Matrix::zeros(pv.rows(), pv.cols()));
                let mut dz = need_z.then(|| Matrix::zeros(zv.rows(), zv.cols()));
                for &(a, b) in pairs.iter() {
                    let (a, b) = (a as usize, b as usize);
                    let (pr, zr) = (pv.row(a), zv.row(b));
                    let (np, p_live) = guarded_norm(pr, *eps);
                    let (nz, z_live) = guarded_norm(zr, *eps);
                    let pz = dot(pr, zr);
                    let s = upstream / (np * nz);
                    if let Some(dp) = dp.as_mut() {
                        // A clamped norm is constant, so only the numerator varies.
                        let k = if p_live { pz / (np * np) } else { 0.0 };
                        for ((d, &pi), &zi) in dp.row_mut(a).iter_mut().zip(pr).zip(zr) {
                            *d += s * (k * pi - zi);
                        }
                    }
                    if let Some(dz) = dz.as_mut() {
                        let k = if z_live { pz / (nz * nz) } else { 0.0 };
                        for ((d, &zi), &pi) in dz.row_mut(b).iter_mut().zip(zr).zip(pr) {
                            *d += s * (k * zi - pi);
                        }
                    }
                }
                if let Some(dp) = dp {
                    self.accumulate(grads, *p, dp);
                }
                if let Some(dz) = dz {
                    self.accumulate(grads, *z, dz);
                }
            }
            Op::WeightedSum(terms) => {
                let upstream = g.get(0, 0);
                for &(v, w) in terms {
                    self.accumulate(grads, v, Matrix::scalar(upstream * w));
                }
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                self.accumulate(grads, *x, Matrix::filled(r, c, g.get(0, 0)));
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(max(|x|, eps), |x| > eps)`.
fn guarded_norm(x: &[f64], eps: f64) -> (f64, bool) {
    let n = dot(x, x).sqrt();
    if n > eps {
        (n, true)
    } else {
        (eps, false)
    }
}

/// Negative cosine with each norm clamped below at `eps`; exact whenever
/// both norms exceed it.
pub(crate) fn neg_cos_eps(p: &[f64], z: &[f64], eps: f64) -> f64 {
    -dot(p, z) / (guarded_norm(p, eps).0 * guarded_norm(z, eps).0)
}

/// Negative cosine similarity `-(p/|p|) . (z/|z|)`. Zero-norm inputs are an error.
pub fn neg_cosine(p: &[f64], z: &[f64]) -> Result<f64> {
    if p.len() != z.len() {
        return Err(Error::ChannelMismatch {
            expected: p.len(),
            got: z.len(),
        });
    }
    let np = dot(p, p).sqrt();
    let nz = dot(z, z).sqrt();
    if np == 0.0 || nz == 0.0 || !np.is_finite() || !nz.is_finite() {
        return Err(Error::Degenerate("neg_cosine of a zero-norm vector"));
    }
    Ok(-dot(p, z) / (np * nz))
}
