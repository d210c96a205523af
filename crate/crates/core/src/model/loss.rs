use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Graph, NodeId, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::geometry::{norm, raw, CurvatureSpace};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Margin for negative pairs.
    pub alpha: f64,
    /// Weight of the distance term in the pair energy.
    pub beta: f64,
    pub classes: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            classes: 2,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.classes == 2 || self.classes == 3) {
            return Err(Error::Config(format!("classes must be 2 or 3, got {}", self.classes)));
        }
        Ok(())
    }
}

/// `-log probs[gold]` with the probability clamped below at `1e-12`.
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<f64> {
    let p = probs
        .get(gold)
        .ok_or_else(|| Error::InvalidArgument(format!("gold class {gold} out of range for {} classes", probs.len())))?;
    Ok(-p.max(PROB_CLAMP).ln())
}

/// `beta d(u, v) + (1 - beta) max(0, |v| - |u|)` with `u` the premise.
pub fn pair_energy(u: &[f64], v: &[f64], beta: f64, space: &CurvatureSpace) -> f64 {
    beta * raw::distance(space.c(), u, v) + (1.0 - beta) * (norm(v) - norm(u)).max(0.0)
}

pub fn negative_hinge(energy: f64, alpha: f64) -> f64 {
    (alpha - energy).max(0.0)
}

/// `Σ_P E(p, h) + Σ_N max(0, alpha - E(p', h'))`.
pub fn margin_loss(
    positives: &[(&[f64], &[f64])],
    negatives: &[(&[f64], &[f64])],
    alpha: f64,
    beta: f64,
    space: &CurvatureSpace,
) -> f64 {
    let pos: f64 = positives.iter().map(|(u, v)| pair_energy(u, v, beta, space)).sum();
    let neg: f64 = negatives
        .iter()
        .map(|(u, v)| negative_hinge(pair_energy(u, v, beta, space), alpha))
        .sum();
    pos + neg
}

/// `|max(0, y - x)|^2`; zero exactly when `y <= x` coordinate-wise.
pub fn order_energy(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(x.iter().zip(y).map(|(a, b)| (b - a).max(0.0).powi(2)).sum())
}

/// `-log[exp(-d) / (Σ exp(-d') + exp(-d))]`, evaluated as
/// `log(1 + Σ exp(d - d'))` so a well-separated pair does not cancel to zero.
pub fn disentangle_loss(pair_dist: f64, negative_dists: &[f64]) -> f64 {
    let mut terms: Vec<f64> = negative_dists.iter().map(|d| pair_dist - d).collect();
    terms.push(0.0);
    log_sum_exp(&terms)
}

pub fn pair_energy_graph(g: &mut Graph<'_>, u: NodeId, v: NodeId, beta: f64, c: f64) -> Result<NodeId> {
    let d = g.distance(u, v, c)?;
    let nu = g.norm(u);
    let nv = g.norm(v);
    let gap = g.sub(nv, nu)?;
    let hinge = g.relu(gap);
    let a = g.scale(d, beta);
    let b = g.scale(hinge, 1.0 - beta);
    g.add(a, b)
}

pub fn negative_hinge_graph(g: &mut Graph<'_>, energy: NodeId, alpha: f64) -> NodeId {
    let shifted = g.affine(energy, -1.0, alpha);
    g.relu(shifted)
}

pub fn order_energy_graph(g: &mut Graph<'_>, x: NodeId, y: NodeId) -> Result<NodeId> {
    let diff = g.sub(y, x)?;
    let pos = g.relu(diff);
    Ok(g.sq_norm(pos))
}

pub fn disentangle_graph(g: &mut Graph<'_>, pair_dist: NodeId, negative_dists: &[NodeId]) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(negative_dists.len() + 1);
    for &d in negative_dists {
        terms.push(g.sub(pair_dist, d)?);
    }
    terms.push(g.scalar(0.0));
    g.log_sum_exp(&terms)
}
