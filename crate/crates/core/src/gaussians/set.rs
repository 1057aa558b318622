use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::tensors::{Graph, Real, Tensor};

use super::heads::GaussianVars;
use super::render::{RenderOutput, RenderSettings};

/// Render differentiable Gaussians into `camera` at `height × width`.
pub fn render<T: Real>(
    g: &Graph<T>,
    set: &GaussianVars,
    camera: &Camera,
    height: usize,
    width: usize,
    settings: &RenderSettings,
) -> Result<RenderOutput<T>> {
    let proj = g.project_gaussians(set.centers, set.scales, set.rotations, camera, settings.cov_epsilon)?;
    g.rasterize(&proj, set.opacities, set.colors, height, width, settings)
}

/// Plain decoded primitives, one per column: centers `[3, P]`, scales `[3, P]`,
/// rotations `[4, P]` (unit quaternions `w, x, y, z`), opacities `[1, P]`,
/// colors `[3, P]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet {
    pub centers: Tensor<f32>,
    pub scales: Tensor<f32>,
    pub rotations: Tensor<f32>,
    pub opacities: Tensor<f32>,
    pub colors: Tensor<f32>,
}

impl GaussianSet {
    pub fn empty() -> Self {
        let z = |c| Tensor::zeros(&[c, 0]);
        Self { centers: z(3), scales: z(3), rotations: z(4), opacities: z(1), colors: z(3) }
    }

    pub fn from_vars<T: Real>(g: &Graph<T>, vars: &GaussianVars) -> Self {
        let take = |v| g.value(v).cast::<f32>();
        Self {
            centers: take(vars.centers),
            scales: take(vars.scales),
            rotations: take(vars.rotations),
            opacities: take(vars.opacities),
            colors: take(vars.colors),
        }
    }

    pub fn len(&self) -> usize {
        self.opacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Check shapes, positive scales, unit quaternions and attribute ranges.
    pub fn validate(&self) -> Result<()> {
        let p = self.len();
        for (name, t, c) in [
            ("centers", &self.centers, 3),
            ("scales", &self.scales, 3),
            ("rotations", &self.rotations, 4),
            ("opacities", &self.opacities, 1),
            ("colors", &self.colors, 3),
        ] {
            if t.shape() != [c, p] {
                return Err(Error::shape("gaussian_set", format!("{name} is {:?}, expected [{c}, {p}]", t.shape())));
            }
        }
        if let Some(i) = self.scales.data().iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Format(format!("scale {} of primitive {} is not positive", self.scales.data()[i], i % p)));
        }
        for i in 0..p {
            let n: f32 = (0..4).map(|k| self.rotations.data()[k * p + i].powi(2)).sum();
            if (n.sqrt() - 1.0).abs() > 1e-5 {
                return Err(Error::Format(format!("quaternion {i} has norm {}", n.sqrt())));
            }
        }
        Ok(())
    }

    /// Primitives reordered so that new column `k` is old column `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let p = self.len();
        let perm = |t: &Tensor<f32>| {
            let c = t.shape()[0];
            Tensor::from_fn(&[c, order.len()], |i| t.data()[(i / order.len()) * p + order[i % order.len()]])
        };
        Self {
            centers: perm(&self.centers),
            scales: perm(&self.scales),
            rotations: perm(&self.rotations),
            opacities: perm(&self.opacities),
            colors: perm(&self.colors),
        }
    }

    /// Render without gradients.
    pub fn render(&self, camera: &Camera, height: usize, width: usize, settings: &RenderSettings) -> Result<Tensor<f32>> {
        let g = Graph::<f64>::new();
        let c = |t: &Tensor<f32>| g.constant(t.cast());
        let vars = GaussianVars {
            centers: c(&self.centers),
            scales: c(&self.scales),
            rotations: c(&self.rotations),
            opacities: c(&self.opacities),
            colors: c(&self.colors),
        };
        let out = render(&g, &vars, camera, height, width, settings)?;
        Ok(g.value(out.image).cast())
    }
}
