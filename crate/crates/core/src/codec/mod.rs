//! Rate-conditioned hyperprior codec for the Gaussian-generation feature.
//!
//! Level 0 is the hyper-latent (`H/16 × W/16`), coded with a per-channel
//! λ-conditioned discretized Gaussian. Level 1 is the main latent (`H/4 × W/4`),
//! whose per-symbol mean and scale come from the decoded hyper-latent.

mod entropy;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensors::{
    softplus, Conv2d, Graph, ParamGroup, ParamId, ParamStore, Real, Tensor, Upconv, Var, LEAKY_SLOPE,
};

pub use entropy::{decode_level, encode_level, encode_level_measured, inference_bits, symbol_tables};

pub const LAMBDA_MIN: f64 = 16.0;
pub const LAMBDA_MAX: f64 = 1024.0;
/// The seven operating points used for rate–distortion sweeps.
pub const LAMBDA_GRID: [f64; 7] = [16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];
const EMBED_DIM: usize = 16;

/// A validated operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint {
    lambda: f64,
}

impl RatePoint {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&lambda) {
            return Err(Error::Lambda(lambda as f32));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(self) -> f64 {
        self.lambda
    }

    /// `log2 λ` mapped onto `[0, 1]` over the trained range.
    pub fn position(self) -> f64 {
        (self.lambda.log2() - LAMBDA_MIN.log2()) / (LAMBDA_MAX.log2() - LAMBDA_MIN.log2())
    }

    /// Weight of the distortion terms in the codec-stage objective.
    pub fn distortion_weight(self) -> f64 {
        self.lambda / LAMBDA_MAX
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodecConfig {
    pub feature_channels: usize,
    pub latent_channels: usize,
    pub hyper_channels: usize,
    /// Symbols are clamped to `[-alphabet_bound, alphabet_bound]`.
    pub alphabet_bound: i32,
    pub sigma_min: f64,
    pub p_min: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            feature_channels: 32,
            latent_channels: 64,
            hyper_channels: 32,
            alphabet_bound: 64,
            sigma_min: 0.11,
            p_min: 1.0 / 65536.0,
        }
    }
}

/// Integer symbols of one latent level, channel-major `[C, h, w]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedLevel {
    pub shape: [usize; 3],
    pub symbols: Vec<i32>,
}

/// Quantized latents of one view: `levels[0]` hyper, `levels[1]` main.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentStack {
    pub levels: Vec<QuantizedLevel>,
}

/// Per-symbol discretized Gaussian parameters, aligned with a level's symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Round half away from zero, then clamp to `[-bound, bound]`.
pub fn quantize_value(v: f64, bound: i32) -> i32 {
    let r = v.round();
    r.clamp(-bound as f64, bound as f64) as i32
}

/// Result of the noise-relaxed training pass through the codec.
pub struct TrainOutput {
    pub reconstruction: Var,
    /// Scalar: estimated bits of both levels.
    pub bits: Var,
    pub latent: Var,
}

#[derive(Clone, Debug)]
pub struct Codec {
    pub config: CodecConfig,
    gain_w1: ParamId,
    gain_b1: ParamId,
    gain_w2: ParamId,
    gain_b2: ParamId,
    ana1: Conv2d,
    ana2: Conv2d,
    hyp1: Conv2d,
    hyp2: Conv2d,
    prior_mu: ParamId,
    prior_mu_w: ParamId,
    prior_scale: ParamId,
    prior_scale_w: ParamId,
    hsyn1: Upconv,
    hsyn2: Upconv,
    scale_w: ParamId,
    syn1: Upconv,
    syn2: Upconv,
    syn3: Conv2d,
}

fn softplus_inv(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

impl Codec {
    pub fn new<T: Real>(store: &mut ParamStore<T>, config: CodecConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let grp = ParamGroup::Codec;
        let (cf, cz, ch) = (config.feature_channels, config.latent_channels, config.hyper_channels);
        let e = EMBED_DIM;

        // Gain net starts at gain 1 for λ = 16 and e² for λ = 1024 in every channel.
        let w1 = 1.0;
        let b1: Vec<f64> = (0..e).map(|j| -2.0 + 3.0 * j as f64 / (e - 1) as f64).collect();
        let hidden = |t: f64| -> f64 { b1.iter().map(|&b| softplus(softplus(w1) * t + b)).sum() };
        let per_unit = 2.0 / (hidden(1.0) - hidden(0.0));
        let b2 = -per_unit * hidden(0.0);
        let gain_w1 = store.register("codec.gain.w1", Tensor::full(&[e], T::of(w1)), grp)?;
        let gain_b1 = store.register("codec.gain.b1", Tensor::from_fn(&[e], |j| T::of(b1[j])), grp)?;
        let gain_w2 = store.register("codec.gain.w2", Tensor::full(&[cz, e], T::of(softplus_inv(per_unit))), grp)?;
        let gain_b2 = store.register("codec.gain.b2", Tensor::full(&[cz], T::of(b2)), grp)?;

        let ana1 = Conv2d::new(store, "codec.analysis1", grp, (cf, cz, 3), 2, rng)?;
        let ana2 = Conv2d::new(store, "codec.analysis2", grp, (cz, cz, 3), 2, rng)?;
        let hyp1 = Conv2d::new(store, "codec.hyper_analysis1", grp, (cz, ch, 3), 2, rng)?;
        let hyp2 = Conv2d::new(store, "codec.hyper_analysis2", grp, (ch, ch, 3), 2, rng)?;
        let prior_mu = store.register("codec.prior.mu", Tensor::zeros(&[ch]), grp)?;
        let prior_mu_w = store.register("codec.prior.mu_lambda", Tensor::zeros(&[ch, e]), grp)?;
        let prior_scale = store.register("codec.prior.scale", Tensor::full(&[ch], T::of(softplus_inv(1.0))), grp)?;
        let prior_scale_w = store.register("codec.prior.scale_lambda", Tensor::zeros(&[ch, e]), grp)?;
        let hsyn1 = Upconv::new(store, "codec.hyper_synthesis1", grp, (ch, cz), rng)?;
        let hsyn2 = Upconv::new(store, "codec.hyper_synthesis2", grp, (cz, 2 * cz), rng)?;
        let scale_w = store.register("codec.scale_lambda", Tensor::zeros(&[cz, e]), grp)?;
        let syn1 = Upconv::new(store, "codec.synthesis1", grp, (cz, cz), rng)?;
        let syn2 = Upconv::new(store, "codec.synthesis2", grp, (cz, cf), rng)?;
        let syn3 = Conv2d::new(store, "codec.synthesis3", grp, (cf, cf, 3), 1, rng)?;
        Ok(Self {
            config,
            gain_w1,
            gain_b1,
            gain_w2,
            gain_b2,
            ana1,
            ana2,
            hyp1,
            hyp2,
            prior_mu,
            prior_mu_w,
            prior_scale,
            prior_scale_w,
            hsyn1,
            hsyn2,
            scale_w,
            syn1,
            syn2,
            syn3,
        })
    }

    /// `e_λ`: a `[16, 1]` embedding, non-decreasing in λ in every entry.
    pub fn embedding<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, rate: RatePoint) -> Result<Var> {
        let w1 = g.softplus(g.param(store, self.gain_w1));
        let b1 = g.param(store, self.gain_b1);
        let h = g.softplus(g.add(g.scale(w1, rate.position()), b1)?);
        g.reshape(h, &[EMBED_DIM, 1])
    }

    /// Positive per-channel gain `[C_z]`, non-decreasing in λ by construction.
    pub fn gain<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, emb: Var) -> Result<Var> {
        let w2 = g.softplus(g.param(store, self.gain_w2));
        let log_gain = g.linear(emb, w2, None)?;
        let cz = self.config.latent_channels;
        let log_gain = g.add(g.reshape(log_gain, &[cz])?, g.param(store, self.gain_b2))?;
        Ok(g.exp(log_gain))
    }

    /// Main latent before the gain, `[C_z, H/4, W/4]`.
    pub fn analysis_transform<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, f_c: Var) -> Result<Var> {
        let x = g.leaky_relu(self.ana1.forward(g, store, f_c)?, LEAKY_SLOPE);
        self.ana2.forward(g, store, x)
    }

    /// Gained main latent and the hyper-latent computed from it.
    pub fn analysis<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, f_c: Var, gain: Var) -> Result<(Var, Var)> {
        let y = g.mul_channel(self.analysis_transform(g, store, f_c)?, gain)?;
        let z = g.leaky_relu(self.hyp1.forward(g, store, y)?, LEAKY_SLOPE);
        let z = self.hyp2.forward(g, store, z)?;
        Ok((y, z))
    }

    fn lambda_linear<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, w: ParamId, emb: Var) -> Result<Var> {
        let out = g.linear(emb, g.param(store, w), None)?;
        let n = g.shape(out)[0];
        g.reshape(out, &[n])
    }

    /// Mean and scale of the hyper-latent, broadcast over `[C_h, h, w]`.
    pub fn hyper_prior<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        emb: Var,
        spatial: [usize; 2],
    ) -> Result<(Var, Var)> {
        let mu = g.add(g.param(store, self.prior_mu), self.lambda_linear(g, store, self.prior_mu_w, emb)?)?;
        let raw = g.add(g.param(store, self.prior_scale), self.lambda_linear(g, store, self.prior_scale_w, emb)?)?;
        let sigma = g.clamp_min(g.softplus(raw), self.config.sigma_min);
        Ok((g.expand_channels(mu, &spatial), g.expand_channels(sigma, &spatial)))
    }

    /// Per-symbol mean and scale of the main latent from the quantized hyper-latent.
    pub fn main_distribution<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        hyper: Var,
        emb: Var,
    ) -> Result<(Var, Var)> {
        let cz = self.config.latent_channels;
        let x = g.leaky_relu(self.hsyn1.forward(g, store, hyper)?, LEAKY_SLOPE);
        let x = self.hsyn2.forward(g, store, x)?;
        let mu = g.slice(x, 0, 0, cz)?;
        let raw = g.slice(x, 0, cz, cz)?;
        let raw = g.add_channel(raw, self.lambda_linear(g, store, self.scale_w, emb)?)?;
        let sigma = g.clamp_min(g.softplus(raw), self.config.sigma_min);
        Ok((mu, sigma))
    }

    /// `F̂_c` from the (dequantized) gained main latent.
    pub fn synthesis<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, y_hat: Var, gain: Var) -> Result<Var> {
        let x = g.mul_channel(y_hat, g.recip(gain))?;
        let x = g.leaky_relu(self.syn1.forward(g, store, x)?, LEAKY_SLOPE);
        let x = g.leaky_relu(self.syn2.forward(g, store, x)?, LEAKY_SLOPE);
        self.syn3.forward(g, store, x)
    }

    /// Training pass: uniform noise for the rate, straight-through rounding
    /// for the reconstruction.
    pub fn forward_train<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        f_c: Var,
        rate: RatePoint,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrainOutput> {
        let emb = self.embedding(g, store, rate)?;
        let gain = self.gain(g, store, emb)?;
        let (y, z) = self.analysis(g, store, f_c, gain)?;
        let bound = self.config.alphabet_bound as f64;
        let noisy = |v: Var, rng: &mut ChaCha8Rng| -> Result<Var> {
            let noise = Tensor::from_fn(&g.shape(v), |_| T::of(rng.random_range(-0.5..0.5)));
            g.add(v, g.constant(noise))
        };
        let zs = g.shape(z);
        let (mu_z, sigma_z) = self.hyper_prior(g, store, emb, [zs[1], zs[2]])?;
        let bits_z = g.gaussian_bits(noisy(z, rng)?, mu_z, sigma_z, self.config.p_min)?;
        let z_hat = g.round_st(z, bound);
        let (mu_y, sigma_y) = self.main_distribution(g, store, z_hat, emb)?;
        let bits_y = g.gaussian_bits(noisy(y, rng)?, mu_y, sigma_y, self.config.p_min)?;
        let bits = g.add(g.sum(bits_z), g.sum(bits_y))?;
        let y_hat = g.round_st(y, bound);
        let reconstruction = self.synthesis(g, store, y_hat, gain)?;
        Ok(TrainOutput { reconstruction, bits, latent: y })
    }

    /// Quantize both levels of one view's feature and return the symbols with
    /// the distributions the entropy coder must use.
    pub fn encode_latents<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        f_c: Var,
        rate: RatePoint,
    ) -> Result<(LatentStack, Vec<SymbolDistribution>)> {
        let emb = self.embedding(g, store, rate)?;
        let gain = self.gain(g, store, emb)?;
        let (y, z) = self.analysis(g, store, f_c, gain)?;
        let hyper = self.quantize_level(g, z);
        let main = self.quantize_level(g, y);
        let hyper_dist = self.hyper_distribution(g, store, rate, hyper.shape)?;
        let main_dist = self.main_symbol_distribution(g, store, rate, &hyper)?;
        Ok((LatentStack { levels: vec![hyper, main] }, vec![hyper_dist, main_dist]))
    }

    fn quantize_level<T: Real>(&self, g: &Graph<T>, v: Var) -> QuantizedLevel {
        let t = g.value(v);
        let s = t.shape();
        QuantizedLevel {
            shape: [s[0], s[1], s[2]],
            symbols: t.data().iter().map(|x| quantize_value(x.as_f64(), self.config.alphabet_bound)).collect(),
        }
    }

    /// Distribution of the hyper-latent symbols of the given shape.
    pub fn hyper_distribution<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        rate: RatePoint,
        shape: [usize; 3],
    ) -> Result<SymbolDistribution> {
        if shape[0] != self.config.hyper_channels {
            return Err(Error::shape("hyper_distribution", format!("dimension 0 is {}, expected {}", shape[0], self.config.hyper_channels)));
        }
        let emb = self.embedding(g, store, rate)?;
        let (mu, sigma) = self.hyper_prior(g, store, emb, [shape[1], shape[2]])?;
        Ok(to_distribution(g, mu, sigma))
    }

    /// Distribution of the main-latent symbols given the decoded hyper-latent.
    pub fn main_symbol_distribution<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        rate: RatePoint,
        hyper: &QuantizedLevel,
    ) -> Result<SymbolDistribution> {
        let emb = self.embedding(g, store, rate)?;
        let (mu, sigma) = self.main_distribution(g, store, level_tensor(g, hyper)?, emb)?;
        Ok(to_distribution(g, mu, sigma))
    }

    /// `F̂_c` from decoded symbols and λ alone.
    pub fn decode_feature<T: Real>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        rate: RatePoint,
        main: &QuantizedLevel,
    ) -> Result<Var> {
        if main.shape[0] != self.config.latent_channels {
            return Err(Error::shape("decode_feature", format!("dimension 0 is {}, expected {}", main.shape[0], self.config.latent_channels)));
        }
        let emb = self.embedding(g, store, rate)?;
        let gain = self.gain(g, store, emb)?;
        self.synthesis(g, store, level_tensor(g, main)?, gain)
    }

    /// Shape of the main latent and hyper-latent for an `H × W` feature.
    pub fn latent_shapes(&self, h: usize, w: usize) -> [[usize; 3]; 2] {
        [
            [self.config.hyper_channels, h / 16, w / 16],
            [self.config.latent_channels, h / 4, w / 4],
        ]
    }
}

fn level_tensor<T: Real>(g: &Graph<T>, level: &QuantizedLevel) -> Result<Var> {
    let t = Tensor::new(&level.shape, level.symbols.iter().map(|&s| T::of(s as f64)).collect())?;
    Ok(g.constant(t))
}

fn to_distribution<T: Real>(g: &Graph<T>, mu: Var, sigma: Var) -> SymbolDistribution {
    SymbolDistribution {
        mu: g.value(mu).data().iter().map(|v| v.as_f64()).collect(),
        sigma: g.value(sigma).data().iter().map(|v| v.as_f64()).collect(),
    }
}
