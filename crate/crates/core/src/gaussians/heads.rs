//! Decoder heads: normalized inverse depth and pixel-aligned Gaussian attributes.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{backproject_depth, normalize_inverse_depth, Camera, MetricDepth, NormDepth};
use crate::tensors::{Conv2d, Graph, ParamGroup, ParamStore, Real, Tensor, Var, LEAKY_SLOPE};

pub const HEAD_HIDDEN: usize = 32;
/// Channels of the raw attribute map: opacity, 3 scales, 4 rotation, 3 color.
pub const ATTR_CHANNELS: usize = 11;

/// `S = σ(DepthHead(F))`.
#[derive(Clone, Copy, Debug)]
pub struct DepthHead {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl DepthHead {
    pub fn new<T: Real>(store: &mut ParamStore<T>, feature_channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let grp = ParamGroup::Decoder;
        Ok(Self {
            conv1: Conv2d::new(store, "decoder.depth_head.conv1", grp, (feature_channels, HEAD_HIDDEN, 3), 1, rng)?,
            conv2: Conv2d::new(store, "decoder.depth_head.conv2", grp, (HEAD_HIDDEN, 1, 3), 1, rng)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, features: Var) -> Result<NormDepth> {
        let h = g.leaky_relu(self.conv1.forward(g, store, features)?, LEAKY_SLOPE);
        Ok(NormDepth(g.sigmoid(self.conv2.forward(g, store, h)?)))
    }
}

/// Activated per-pixel attributes of one view, each `[C, H, W]`.
#[derive(Clone, Copy, Debug)]
pub struct AttrMaps {
    pub opacity: Var,
    pub scales: Var,
    pub rotations: Var,
    pub colors: Var,
}

/// Convolutional head over `(F_dec, normalized inverse depth)`.
#[derive(Clone, Copy, Debug)]
pub struct GsHead {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl GsHead {
    pub fn new<T: Real>(store: &mut ParamStore<T>, feature_channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let grp = ParamGroup::Decoder;
        Ok(Self {
            conv1: Conv2d::new(store, "decoder.gs_head.conv1", grp, (feature_channels + 1, HEAD_HIDDEN, 3), 1, rng)?,
            conv2: Conv2d::new(store, "decoder.gs_head.conv2", grp, (HEAD_HIDDEN, ATTR_CHANNELS, 1), 1, rng)?,
        })
    }

    /// Raw `[11, H, W]` attribute logits.
    pub fn logits<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, features: Var, s: NormDepth) -> Result<Var> {
        let x = g.concat(&[features, s.0], 0)?;
        let h = g.leaky_relu(self.conv1.forward(g, store, x)?, LEAKY_SLOPE);
        self.conv2.forward(g, store, h)
    }

    /// Attributes for features `F_dec` and metric depth `D̂` seen from `camera`.
    pub fn forward<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        features: Var,
        depth: MetricDepth,
        camera: &Camera,
    ) -> Result<AttrMaps> {
        let s = normalize_inverse_depth(g, depth, camera.near, camera.far);
        let raw = self.logits(g, store, features, s)?;
        activate(g, raw, depth, camera)
    }
}

/// Map raw logits to attributes: sigmoid opacity, softplus scales times the
/// pixel footprint `D̂ / fx`, unit quaternions, sigmoid colors.
pub fn activate<T: Real>(g: &Graph<T>, raw: Var, depth: MetricDepth, camera: &Camera) -> Result<AttrMaps> {
    let shape = g.shape(raw);
    if shape.len() != 3 || shape[0] != ATTR_CHANNELS {
        return Err(Error::shape("gs_head", format!("expected [{ATTR_CHANNELS}, H, W], got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let opacity = g.sigmoid(g.slice(raw, 0, 0, 1)?);
    let footprint = g.scale(depth.0, 1.0 / camera.intrinsics.fx);
    let footprint = g.concat(&[footprint, footprint, footprint], 0)?;
    let scales = g.mul(g.softplus(g.slice(raw, 0, 1, 3)?), footprint)?;
    let identity = g.constant(Tensor::from_fn(&[4, h, w], |i| if i < h * w { T::one() } else { T::zero() }));
    let rotations = g.normalize_channels(g.add(g.slice(raw, 0, 4, 4)?, identity)?);
    let colors = g.sigmoid(g.slice(raw, 0, 8, 3)?);
    Ok(AttrMaps { opacity, scales, rotations, colors })
}

/// Differentiable Gaussians, one per column of each `[C, P]` tensor.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub centers: Var,
    pub scales: Var,
    pub rotations: Var,
    pub opacities: Var,
    pub colors: Var,
}

impl GaussianVars {
    pub fn count<T: Real>(&self, g: &Graph<T>) -> usize {
        g.shape(self.centers)[1]
    }
}

/// One Gaussian per pixel, centered at the backprojection of `D̂`.
pub fn map_2d_to_3d<T: Real>(g: &Graph<T>, depth: MetricDepth, attrs: &AttrMaps, camera: &Camera) -> Result<GaussianVars> {
    let centers = backproject_depth(g, depth, camera)?;
    let p = g.shape(centers)[1];
    let flat = |v: Var, c: usize| g.reshape(v, &[c, p]);
    Ok(GaussianVars {
        centers,
        scales: flat(attrs.scales, 3)?,
        rotations: flat(attrs.rotations, 4)?,
        opacities: flat(attrs.opacity, 1)?,
        colors: flat(attrs.colors, 3)?,
    })
}

/// Concatenate the Gaussians of several views.
pub fn merge<T: Real>(g: &Graph<T>, sets: &[GaussianVars]) -> Result<GaussianVars> {
    if sets.len() == 1 {
        return Ok(sets[0]);
    }
    let cat = |f: fn(&GaussianVars) -> Var| g.concat(&sets.iter().map(f).collect::<Vec<_>>(), 1);
    Ok(GaussianVars {
        centers: cat(|s| s.centers)?,
        scales: cat(|s| s.scales)?,
        rotations: cat(|s| s.rotations)?,
        opacities: cat(|s| s.opacities)?,
        colors: cat(|s| s.colors)?,
    })
}
