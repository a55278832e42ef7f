//! Correspondence losses between 3D and 4D features.
//!
//! All terms are built from `D(p, z) = -(p/|p|) . (z/|z|)` evaluated on
//! feature rows. Correspondences are given as row-index pairs into the
//! per-branch feature matrices. By default every term is a mean (over the
//! correspondences of a set, then over sets), which keeps it in `[-1, 1]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{neg_cosine, Graph, Var};

pub const TRAIN_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Mean over correspondences, then over sets.
    Mean,
    /// Plain sums, as the objective is written.
    Sum,
}

/// Where the stop-gradient sits in the 3D-4D term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossStopGradient {
    /// `D(SG(p3), z4)` and `D(SG(p4), z3)`.
    Predictor,
    /// `D(p3, SG(z4))` and `D(p4, SG(z3))`.
    Projection,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub reduction: Reduction,
    pub cross_sg: CrossStopGradient,
    /// Lower clamp on every norm.
    pub eps: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            reduction: Reduction::Mean,
            cross_sg: CrossStopGradient::Predictor,
            eps: TRAIN_EPS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub w_3d: f64,
    pub w_3d4d: f64,
    pub w_4d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_3d: 1.0,
            w_3d4d: 1.0,
            w_4d: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_3d", self.w_3d), ("w_3d4d", self.w_3d4d), ("w_4d", self.w_4d)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        Ok(())
    }
}

/// Per-term values and the correspondences behind them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub l3d: f64,
    pub l3d4d: f64,
    pub l4d: f64,
    pub total: f64,
    pub n3d: usize,
    pub n3d4d: usize,
    pub n4d: usize,
    pub dropped: usize,
}

impl LossReport {
    /// Averages reports term by term; counts are summed.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut out = LossReport::default();
        for r in reports {
            out.l3d += r.l3d / n;
            out.l3d4d += r.l3d4d / n;
            out.l4d += r.l4d / n;
            out.total += r.total / n;
            out.n3d += r.n3d;
            out.n3d4d += r.n3d4d;
            out.n4d += r.n4d;
            out.dropped += r.dropped;
        }
        out
    }
}

/// Eq. form `1/2 D(p1, SG z2) + 1/2 D(p2, SG z1)` on plain vectors (strict).
pub fn simsiam_pair(p1: &[f64], z2: &[f64], p2: &[f64], z1: &[f64]) -> Result<f64> {
    Ok(0.5 * neg_cosine(p1, z2)? + 0.5 * neg_cosine(p2, z1)?)
}

fn swapped(pairs: &[(u32, u32)]) -> Arc<Vec<(u32, u32)>> {
    Arc::new(pairs.iter().map(|&(a, b)| (b, a)).collect())
}

/// Set weights: `1 / (|set| * non-empty sets)` under `Mean`, 1 under `Sum`.
fn set_weights(sets: &[Vec<(u32, u32)>], reduction: Reduction) -> Result<Vec<f64>> {
    let used = sets.iter().filter(|s| !s.is_empty()).count();
    if used == 0 {
        return Err(Error::LossUndefined);
    }
    Ok(sets
        .iter()
        .map(|s| match reduction {
            _ if s.is_empty() => 0.0,
            Reduction::Mean => 1.0 / (s.len() * used) as f64,
            Reduction::Sum => 1.0,
        })
        .collect())
}

/// Symmetrized term between corresponding rows of one branch:
/// `1/2 D(p[a], SG z[b]) + 1/2 D(p[b], SG z[a])` for every `(a, b)` of every
/// set. Serves both the inter-frame 3D term and the 4D-4D term.
pub fn loss_pairs(g: &mut Graph, p: Var, z: Var, sets: &[Vec<(u32, u32)>], opts: &LossOptions) -> Result<Var> {
    let weights = set_weights(sets, opts.reduction)?;
    let sz = g.stop_gradient(z);
    let mut terms = Vec::new();
    for (set, &w) in sets.iter().zip(&weights) {
        if set.is_empty() {
            continue;
        }
        let fwd = g.pair_neg_cosine(p, sz, Arc::new(set.clone()), opts.eps)?;
        let bwd = g.pair_neg_cosine(p, sz, swapped(set), opts.eps)?;
        terms.push((fwd, 0.5 * w));
        terms.push((bwd, 0.5 * w));
    }
    g.weighted_sum(&terms)
}

/// Inter-frame 3D term; `sets[k]` holds `(row in frame i, row in frame j)`
/// for the k-th frame pair.
pub fn loss_3d(g: &mut Graph, p3: Var, z3: Var, sets: &[Vec<(u32, u32)>], opts: &LossOptions) -> Result<Var> {
    loss_pairs(g, p3, z3, sets, opts)
}

/// 4D-4D term across time steps; same layout as [`loss_3d`].
pub fn loss_4d(g: &mut Graph, p4: Var, z4: Var, sets: &[Vec<(u32, u32)>], opts: &LossOptions) -> Result<Var> {
    loss_pairs(g, p4, z4, sets, opts)
}

/// Per-frame 3D-4D term; `sets[i]` holds `(3D row, 4D row)` for every point
/// of frame i with a known identity.
pub fn loss_3d4d(
    g: &mut Graph,
    branch3: (Var, Var),
    branch4: (Var, Var),
    sets: &[Vec<(u32, u32)>],
    opts: &LossOptions,
) -> Result<Var> {
    let ((p3, z3), (p4, z4)) = (branch3, branch4);
    let weights = set_weights(sets, opts.reduction)?;
    let (p3, z4, p4, z3) = match opts.cross_sg {
        CrossStopGradient::Predictor => (g.stop_gradient(p3), z4, g.stop_gradient(p4), z3),
        CrossStopGradient::Projection => (p3, g.stop_gradient(z4), p4, g.stop_gradient(z3)),
    };
    let mut terms = Vec::new();
    for (set, &w) in sets.iter().zip(&weights) {
        if set.is_empty() {
            continue;
        }
        let a = g.pair_neg_cosine(p3, z4, Arc::new(set.clone()), opts.eps)?;
        let b = g.pair_neg_cosine(p4, z3, swapped(set), opts.eps)?;
        terms.push((a, 0.5 * w));
        terms.push((b, 0.5 * w));
    }
    g.weighted_sum(&terms)
}

/// Weighted sum of the enabled terms. A term that is `None` contributes 0.
pub fn loss_total(g: &mut Graph, terms: [Option<Var>; 3], weights: &LossWeights) -> Result<Var> {
    weights.validate()?;
    let w = [weights.w_3d, weights.w_3d4d, weights.w_4d];
    let parts: Vec<(Var, f64)> = terms.iter().zip(w).filter_map(|(t, w)| t.map(|t| (t, w))).collect();
    if parts.is_empty() {
        return Ok(g.constant(crate::tensor::Matrix::scalar(0.0)));
    }
    g.weighted_sum(&parts)
}
