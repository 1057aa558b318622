//! Metric depth and normalized inverse depth.
//!
//! `S = 0` is the far bound and `S = 1` the near bound:
//! `D = 1 / (1/f + S (1/n - 1/f))` and `S = (1/D - 1/f) / (1/n - 1/f)`.

use crate::error::Result;
use crate::tensors::{Graph, Real, Tensor, Var};

/// Which domain a depth tensor lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthDomain {
    Metric,
    NormalizedInverse,
}

/// A `[1, H, W]` depth map tagged with its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap<T> {
    pub values: Tensor<T>,
    pub domain: DepthDomain,
}

/// Metric depth node on a graph.
#[derive(Clone, Copy, Debug)]
pub struct MetricDepth(pub Var);

/// Normalized inverse depth node on a graph, values in `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct NormDepth(pub Var);

pub fn denormalize(s: f64, near: f64, far: f64) -> f64 {
    1.0 / (1.0 / far + s * (1.0 / near - 1.0 / far))
}

pub fn normalize(d: f64, near: f64, far: f64) -> f64 {
    (1.0 / d - 1.0 / far) / (1.0 / near - 1.0 / far)
}

impl<T: Real> DepthMap<T> {
    pub fn to_metric(&self, near: f64, far: f64) -> Self {
        match self.domain {
            DepthDomain::Metric => self.clone(),
            DepthDomain::NormalizedInverse => Self {
                values: self.values.map(|s| T::of(denormalize(s.as_f64(), near, far))),
                domain: DepthDomain::Metric,
            },
        }
    }

    pub fn to_normalized(&self, near: f64, far: f64) -> Self {
        match self.domain {
            DepthDomain::NormalizedInverse => self.clone(),
            DepthDomain::Metric => Self {
                values: self.values.map(|d| T::of(normalize(d.as_f64(), near, far))),
                domain: DepthDomain::NormalizedInverse,
            },
        }
    }
}

/// Differentiable `S -> D`.
pub fn denormalize_depth<T: Real>(g: &Graph<T>, s: NormDepth, near: f64, far: f64) -> MetricDepth {
    let inv = g.add_scalar(g.scale(s.0, 1.0 / near - 1.0 / far), 1.0 / far);
    MetricDepth(g.recip(inv))
}

/// Differentiable `D -> S`.
pub fn normalize_inverse_depth<T: Real>(g: &Graph<T>, d: MetricDepth, near: f64, far: f64) -> NormDepth {
    let span = 1.0 / near - 1.0 / far;
    let inv = g.recip(d.0);
    NormDepth(g.scale(g.add_scalar(inv, -1.0 / far), 1.0 / span))
}

/// Mean absolute difference of two normalized inverse-depth maps.
pub fn norm_depth_l1<T: Real>(g: &Graph<T>, a: NormDepth, b: NormDepth) -> Result<Var> {
    let d = g.sub(a.0, b.0)?;
    Ok(g.mean(g.abs(d)))
}
