//! Plane-sweep multi-view encoder, Gaussian-generation feature head, and the
//! depth-guided residual refiners.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    aligned_feature, denormalize, mul_plane, normalize_inverse_depth, scene_dims, warp_to_reference, Camera,
    ContextView, MetricDepth,
};
use crate::tensors::{scale_param, Conv2d, Graph, ParamGroup, ParamStore, Real, Tensor, Var, LEAKY_SLOPE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackboneConfig {
    /// Channels of the half-resolution matching feature.
    pub mv_channels: usize,
    /// Channels of the Gaussian-generation feature.
    pub feature_channels: usize,
    pub candidates: usize,
    /// Multiplier on the cosine matching score before the softmax.
    pub match_temperature: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            mv_channels: 32,
            feature_channels: 32,
            candidates: 32,
            match_temperature: 10.0,
        }
    }
}

/// Depth candidates of one view, uniform in inverse depth from far (`k = 0`) to near.
pub fn depth_candidates(count: usize, near: f64, far: f64) -> Vec<f64> {
    if count == 1 {
        return vec![denormalize(0.5, near, far)];
    }
    (0..count)
        .map(|k| denormalize(k as f64 / (count - 1) as f64, near, far))
        .collect()
}

/// Probability-weighted candidate depth: `P: [D, H, W]` → metric `[1, H, W]`.
pub fn expected_depth<T: Real>(g: &Graph<T>, p: Var, candidates: &[f64]) -> Result<MetricDepth> {
    let shape = g.shape(p);
    let [d, h, w] = shape[..] else {
        return Err(Error::shape("expected_depth", format!("probabilities must be [D, H, W], got {shape:?}")));
    };
    if d != candidates.len() {
        return Err(Error::shape(
            "expected_depth",
            format!("dimension 0 is {d}, but {} candidates", candidates.len()),
        ));
    }
    let weights = g.constant(Tensor::new(&[1, d], candidates.iter().map(|&c| T::of(c)).collect())?);
    let flat = g.reshape(p, &[d, h * w])?;
    let depth = g.linear(flat, weights, None)?;
    Ok(MetricDepth(g.reshape(depth, &[1, h, w])?))
}

/// Outputs of the matching encoder, one entry per view.
pub struct EncoderOutputs {
    /// `[C_mv, H/2, W/2]`.
    pub f_mv: Vec<Var>,
    /// Metric `[1, H, W]`.
    pub d_enc: Vec<MetricDepth>,
    /// Matching probabilities `[D, H, W]`, summing to one over candidates.
    pub p_depth: Vec<Var>,
    pub candidates: Vec<Vec<f64>>,
}

/// `out = in + R(concat(in, aligned(in, D), S(D)))`.
#[derive(Clone, Copy, Debug)]
pub struct Refiner {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl Refiner {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let conv1 = Conv2d::new(store, &format!("{name}.conv1"), group, (2 * channels + 1, channels, 3), 1, rng)?;
        let conv2 = Conv2d::new(store, &format!("{name}.conv2"), group, (channels, channels, 3), 1, rng)?;
        scale_param(store, conv2.weight, 0.1);
        Ok(Self { conv1, conv2 })
    }

    pub fn forward<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        features: &[Var],
        depths: &[MetricDepth],
        cameras: &[Camera],
    ) -> Result<Vec<Var>> {
        let aligned = aligned_feature(g, features, depths, cameras)?;
        let mut out = Vec::with_capacity(features.len());
        for (i, (a, _)) in aligned.into_iter().enumerate() {
            let s = normalize_inverse_depth(g, depths[i], cameras[i].near, cameras[i].far);
            let input = g.concat(&[features[i], a, s.0], 0)?;
            let h = g.leaky_relu(self.conv1.forward(g, store, input)?, LEAKY_SLOPE);
            let r = self.conv2.forward(g, store, h)?;
            out.push(g.add(features[i], r)?);
        }
        Ok(out)
    }
}

/// Matching encoder, feature head, and the pre-codec refiner.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    enc1: Conv2d,
    enc2: Conv2d,
    enc3: Conv2d,
    cost_conv: Conv2d,
    mono_conv: Conv2d,
    head1: Conv2d,
    head2: Conv2d,
    pub refine_pre: Refiner,
}

impl Backbone {
    pub fn new<T: Real>(store: &mut ParamStore<T>, config: BackboneConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let grp = ParamGroup::Backbone;
        let (cm, cf, d) = (config.mv_channels, config.feature_channels, config.candidates);
        let enc1 = Conv2d::new(store, "backbone.enc1", grp, (3, cm / 2, 3), 1, rng)?;
        let enc2 = Conv2d::new(store, "backbone.enc2", grp, (cm / 2, cm, 3), 2, rng)?;
        let enc3 = Conv2d::new(store, "backbone.enc3", grp, (cm, cm, 3), 1, rng)?;
        let cost_conv = Conv2d::new(store, "backbone.cost", grp, (d, d, 3), 1, rng)?;
        scale_param(store, cost_conv.weight, 0.1);
        let mono_conv = Conv2d::new(store, "backbone.mono", grp, (cm, d, 3), 1, rng)?;
        scale_param(store, mono_conv.weight, 0.1);
        let head1 = Conv2d::new(store, "backbone.head1", grp, (3 + cm + d, cf, 3), 1, rng)?;
        let head2 = Conv2d::new(store, "backbone.head2", grp, (cf, cf, 3), 1, rng)?;
        let refine_pre = Refiner::new(store, "backbone.refine_pre", grp, cf, rng)?;
        Ok(Self {
            config,
            enc1,
            enc2,
            enc3,
            cost_conv,
            mono_conv,
            head1,
            head2,
            refine_pre,
        })
    }

    /// Half-resolution matching feature of one image `[3, H, W]`.
    pub fn matching_feature<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, image: Var) -> Result<Var> {
        let x = g.leaky_relu(self.enc1.forward(g, store, image)?, LEAKY_SLOPE);
        let x = g.leaky_relu(self.enc2.forward(g, store, x)?, LEAKY_SLOPE);
        self.enc3.forward(g, store, x)
    }

    /// Cosine agreement `[D, h, w]` between the reference feature and every
    /// source warped through each candidate plane, averaged over valid sources.
    /// Pixels with no valid source score zero.
    pub fn plane_sweep_cost<T: Real>(
        &self,
        g: &Graph<T>,
        features: &[Var],
        reference: usize,
        cameras: &[Camera],
        candidates: &[f64],
    ) -> Result<Var> {
        let shape = g.shape(features[reference]);
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let normed: Vec<Var> = features.iter().map(|&f| g.normalize_channels(f)).collect();
        let mut planes = Vec::with_capacity(candidates.len());
        for &d in candidates {
            let depth = MetricDepth(g.constant(Tensor::full(&[1, h, w], T::of(d))));
            let mut sum: Option<Var> = None;
            let mut count = Tensor::<T>::zeros(&[1, h, w]);
            for s in (0..features.len()).filter(|&s| s != reference) {
                let (warped, mask) = warp_to_reference(g, normed[s], depth, &cameras[reference], &cameras[s])?;
                let agree = g.sum_axis(g.mul(normed[reference], warped)?, 0)?;
                let agree = g.reshape(agree, &[1, h, w])?;
                let masked = mul_plane(g, agree, &mask)?;
                for (n, &m) in count.data_mut().iter_mut().zip(mask.data()) {
                    *n += m;
                }
                sum = Some(match sum {
                    Some(acc) => g.add(acc, masked)?,
                    None => masked,
                });
            }
            planes.push(match sum {
                Some(sum) => {
                    let inv = count.map(|n| if n > T::zero() { T::one() / n } else { T::zero() });
                    mul_plane(g, sum, &inv)?
                }
                None => g.constant(Tensor::zeros(&[1, h, w])),
            });
        }
        debug_assert!(c > 0);
        g.concat(&planes, 0)
    }

    /// Matching features, candidate probabilities, and expected depth for every view.
    pub fn mv_encode<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, views: &[ContextView]) -> Result<EncoderOutputs> {
        let (h, w) = scene_dims(views)?;
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::shape("mv_encode", format!("image size {h}x{w} must be a multiple of 16")));
        }
        let half: Vec<Camera> = views.iter().map(|v| v.camera.scaled(0.5)).collect();
        let mut f_mv = Vec::with_capacity(views.len());
        for v in views {
            let image = g.constant(v.image.cast());
            f_mv.push(self.matching_feature(g, store, image)?);
        }
        let mut out = EncoderOutputs {
            f_mv: Vec::new(),
            d_enc: Vec::new(),
            p_depth: Vec::new(),
            candidates: Vec::new(),
        };
        for (r, view) in views.iter().enumerate() {
            let cands = depth_candidates(self.config.candidates, view.camera.near, view.camera.far);
            let mut logits = self.mono_conv.forward(g, store, f_mv[r])?;
            if views.len() > 1 {
                let cost = self.plane_sweep_cost(g, &f_mv, r, &half, &cands)?;
                logits = g.add(logits, g.scale(cost, self.config.match_temperature))?;
                logits = g.add(logits, self.cost_conv.forward(g, store, cost)?)?;
            }
            let p_half = g.softmax(logits, 0)?;
            let p = g.resize_bilinear(p_half, h, w)?;
            out.d_enc.push(expected_depth(g, p, &cands)?);
            out.p_depth.push(p);
            out.candidates.push(cands);
        }
        out.f_mv = f_mv;
        Ok(out)
    }

    /// Gaussian-generation feature `[C_F, H, W]` per view.
    pub fn feat_head<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        views: &[ContextView],
        enc: &EncoderOutputs,
    ) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(views.len());
        for (i, v) in views.iter().enumerate() {
            let (h, w) = (v.height(), v.width());
            let image = g.constant(v.image.cast());
            let up = g.resize_bilinear(enc.f_mv[i], h, w)?;
            let x = g.concat(&[image, up, enc.p_depth[i]], 0)?;
            let x = g.leaky_relu(self.head1.forward(g, store, x)?, LEAKY_SLOPE);
            out.push(self.head2.forward(g, store, x)?);
        }
        Ok(out)
    }
}
