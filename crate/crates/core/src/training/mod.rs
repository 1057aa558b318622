//! Two-stage optimization, losses, λ sampling, synthetic data and evaluation.

mod config;
mod eval;
pub mod synthetic;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::RatePoint;
use crate::error::{Error, Result};
use crate::gaussians::{render, RenderSettings};
use crate::geometry::{normalize_inverse_depth, Camera, MetricDepth, NormDepth};
use crate::model::{Model, Stage};
use crate::tensors::{AdamW, AdamWConfig, Graph, ParamGroup, Real, Var};

pub use config::TrainingConfig;
pub use eval::{eval_codec_free, eval_rd, render_decoded, write_rd_csv, RdRow, ViewQuality, RD_CSV_HEADER};
pub use synthetic::{generate_scene, generate_synthetic, SyntheticConfig, SyntheticScene};

/// Mean squared error between a rendered image and its reference.
pub fn render_loss<T: Real>(g: &Graph<T>, rendered: Var, reference: Var) -> Result<Var> {
    Ok(g.mean(g.square(g.sub(rendered, reference)?)))
}

/// `mean |S − S_ref|` on normalized inverse depth.
pub fn depth_loss<T: Real>(g: &Graph<T>, s: NormDepth, reference: NormDepth) -> Result<Var> {
    Ok(g.mean(g.abs(g.sub(s.0, reference.0)?)))
}

/// `(λ/λ_max)·(D_render + γ·D_depth) + β·R`, with `R` in bits per pixel.
pub fn codec_objective<T: Real>(
    g: &Graph<T>,
    rate: RatePoint,
    render: Var,
    depth: Var,
    bits_per_pixel: Var,
    gamma: f64,
    beta: f64,
) -> Result<Var> {
    let distortion = g.add(render, g.scale(depth, gamma))?;
    g.add(g.scale(distortion, rate.distortion_weight()), g.scale(bits_per_pixel, beta))
}

/// λ drawn log-uniformly from `[lo, hi]`.
pub fn sample_lambda(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    rng.random_range(lo.ln()..hi.ln()).exp().clamp(lo, hi)
}

/// Where the depth used to place rendered Gaussians came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthSource {
    Encoder,
    Decoded,
}

/// A loss graph plus the scalar parts that make it up.
pub struct StepLoss {
    pub loss: Var,
    pub render_mse: f64,
    pub depth_l1: f64,
    pub bits: f64,
    pub lambda: Option<f64>,
    pub depth_source: DepthSource,
}

fn target_var<T: Real>(g: &Graph<T>, scene: &SyntheticScene) -> Var {
    g.constant(scene.target.image.cast())
}

fn detached_norm_depth<T: Real>(g: &Graph<T>, d: MetricDepth, cam: &Camera) -> NormDepth {
    let s = normalize_inverse_depth(g, d, cam.near, cam.far);
    NormDepth(g.constant(g.value(s.0).as_ref().clone()))
}

/// Codec-free objective: Gaussians from `(F_c, D_enc)` rendered into the target
/// view, plus the decoder depth head fitted to the encoder's depth on `F_c`.
pub fn stage1_loss<T: Real>(g: &Graph<T>, model: &Model<T>, scene: &SyntheticScene, gamma: f64) -> Result<StepLoss> {
    let cams = scene.cameras();
    let enc = model.encode_views(g, &scene.context)?;
    let gaussians = model.gaussians_from_depth(g, &enc.f_c, &enc.enc.d_enc, &cams)?;
    let t = &scene.target;
    let out = render(g, &gaussians, &t.camera, t.height(), t.width(), &RenderSettings::default())?;
    let mse = render_loss(g, out.image, target_var(g, scene))?;
    let mut depth_terms = Vec::with_capacity(cams.len());
    for ((&f, &d), cam) in enc.f_c.iter().zip(&enc.enc.d_enc).zip(&cams) {
        let s = model.depth_head.forward(g, &model.store, f)?;
        depth_terms.push(depth_loss(g, s, detached_norm_depth(g, d, cam))?);
    }
    let depth = mean_of(g, &depth_terms)?;
    let loss = g.add(mse, g.scale(depth, gamma))?;
    Ok(StepLoss {
        loss,
        render_mse: g.value(mse).item().as_f64(),
        depth_l1: g.value(depth).item().as_f64(),
        bits: 0.0,
        lambda: None,
        depth_source: DepthSource::Encoder,
    })
}

fn mean_of<T: Real>(g: &Graph<T>, xs: &[Var]) -> Result<Var> {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = g.add(acc, x)?;
    }
    Ok(g.scale(acc, 1.0 / xs.len() as f64))
}

/// Codec-aware objective at `rate`: every view goes through the noisy codec,
/// the decoder predicts depth from `F̂_c`, and the rate enters in bits per pixel.
pub fn stage2_loss<T: Real>(
    g: &Graph<T>,
    model: &Model<T>,
    scene: &SyntheticScene,
    rate: RatePoint,
    gamma: f64,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<StepLoss> {
    let cams = scene.cameras();
    let enc = model.encode_views(g, &scene.context)?;
    let mut f_hat = Vec::with_capacity(cams.len());
    let mut bits = Vec::with_capacity(cams.len());
    for &f in &enc.f_c {
        let out = model.codec.forward_train(g, &model.store, f, rate, rng)?;
        f_hat.push(out.reconstruction);
        bits.push(out.bits);
    }
    let decoded = model.decode_views(g, &f_hat, &cams)?;
    let t = &scene.target;
    let out = render(g, &decoded.gaussians, &t.camera, t.height(), t.width(), &RenderSettings::default())?;
    let mse = render_loss(g, out.image, target_var(g, scene))?;
    let mut depth_terms = Vec::with_capacity(cams.len());
    for ((&s, &d), cam) in decoded.s.iter().zip(&enc.enc.d_enc).zip(&cams) {
        depth_terms.push(depth_loss(g, s, detached_norm_depth(g, d, cam))?);
    }
    let depth = mean_of(g, &depth_terms)?;
    let pixels = (cams.len() * t.height() * t.width()) as f64;
    let total_bits = bits.iter().skip(1).try_fold(bits[0], |acc, &b| g.add(acc, b))?;
    let bpp = g.scale(total_bits, 1.0 / pixels);
    let loss = codec_objective(g, rate, mse, depth, bpp, gamma, beta)?;
    Ok(StepLoss {
        loss,
        render_mse: g.value(mse).item().as_f64(),
        depth_l1: g.value(depth).item().as_f64(),
        bits: g.value(total_bits).item().as_f64(),
        lambda: Some(rate.lambda()),
        depth_source: DepthSource::Decoded,
    })
}

/// Per-step record handed to the progress callback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
    pub render_mse: f64,
    pub depth_l1: f64,
    pub bits: f64,
    pub lambda: Option<f64>,
    pub lr: f64,
}

/// Optimizer state and data for one training stage.
pub struct Trainer<T: Real> {
    pub model: Model<T>,
    pub config: TrainingConfig,
    pub scenes: Vec<SyntheticScene>,
    optimizer: AdamW,
    rng: ChaCha8Rng,
    step: usize,
}

impl<T: Real> Trainer<T> {
    /// Stage 1 starts from `model`; stage 2 expects `model` to hold stage-1
    /// weights and freezes the backbone.
    pub fn new(mut model: Model<T>, config: TrainingConfig, scenes: Vec<SyntheticScene>) -> Result<Self> {
        config.validate()?;
        if scenes.is_empty() {
            return Err(Error::Config("no training scenes".into()));
        }
        match config.stage {
            1 => model.store.set_all_trainable(true),
            _ => {
                if model.stage == Stage::Init {
                    return Err(Error::Config("stage 2 must start from a stage-1 checkpoint".into()));
                }
                model.store.set_trainable_groups(&[ParamGroup::Codec, ParamGroup::Decoder]);
            }
        }
        let optimizer = AdamW::new(
            &model.store,
            AdamWConfig { lr: config.lr, weight_decay: config.weight_decay, ..Default::default() },
        );
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7e57_da7a);
        Ok(Self { model, config, scenes, optimizer, rng, step: 0 })
    }

    /// Cosine decay from `lr` to a tenth of it.
    fn lr_at(&self, step: usize) -> f64 {
        let p = step as f64 / self.config.steps.max(1) as f64;
        self.config.lr * (0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let scene_idx = self.rng.random_range(0..self.scenes.len());
        let scene = &self.scenes[scene_idx];
        let g = Graph::<T>::new();
        let parts = if self.config.stage == 1 {
            stage1_loss(&g, &self.model, scene, self.config.gamma)?
        } else {
            let lambda = sample_lambda(&mut self.rng, self.config.lambda_min, self.config.lambda_max);
            let rate = RatePoint::new(lambda)?;
            stage2_loss(&g, &self.model, scene, rate, self.config.gamma, self.config.beta, &mut self.rng)?
        };
        let loss = g.value(parts.loss).item().as_f64();
        if !loss.is_finite() {
            return Err(Error::Config(format!("loss became {loss} at step {}", self.step)));
        }
        let grads = g.backward(parts.loss)?;
        self.model.store.zero_grad();
        grads.accumulate_into(&mut self.model.store);
        drop(grads);
        drop(g);
        clip_gradients(&mut self.model.store, self.config.grad_clip);
        let lr = self.lr_at(self.step);
        self.optimizer.config.lr = lr;
        self.optimizer.step(&mut self.model.store);
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            loss,
            render_mse: parts.render_mse,
            depth_l1: parts.depth_l1,
            bits: parts.bits,
            lambda: parts.lambda,
            lr,
        })
    }

    /// Run the configured number of steps and stamp the model with its stage.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepStats)) -> Result<()> {
        while self.step < self.config.steps {
            let stats = self.step()?;
            on_step(&stats);
        }
        self.model.stage = if self.config.stage == 1 { Stage::CodecFree } else { Stage::CodecAware };
        Ok(())
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }
}

/// Training and held-out scenes for a config. Held-out scenes use the next seed.
pub fn scene_sets(config: &TrainingConfig) -> Result<(Vec<SyntheticScene>, Vec<SyntheticScene>)> {
    let train = generate_synthetic(config.seed, config.train_scenes, &config.scene)?;
    let eval = generate_synthetic(config.seed.wrapping_add(1), config.eval_scenes, &config.scene)?;
    Ok((train, eval))
}

/// Build or load the starting model, train one stage, and save to `config.out`
/// when set.
pub fn train(config: &TrainingConfig, on_step: impl FnMut(&StepStats)) -> Result<Model<f32>> {
    config.validate()?;
    let model = match &config.init {
        Some(path) => Model::<f32>::load(path)?,
        None => Model::<f32>::new(config.model, config.seed)?,
    };
    let (scenes, _) = scene_sets(config)?;
    let mut trainer = Trainer::new(model, config.clone(), scenes)?;
    trainer.run(on_step)?;
    let model = trainer.into_model();
    if let Some(out) = &config.out {
        model.save(out)?;
    }
    Ok(model)
}

/// Scale all gradients so their global norm is at most `max_norm`.
fn clip_gradients<T: Real>(store: &mut crate::tensors::ParamStore<T>, max_norm: f64) {
    if !(max_norm > 0.0) {
        return;
    }
    let sq: f64 = store
        .iter()
        .filter_map(|(_, p)| p.grad.as_ref())
        .map(|g| g.data().iter().map(|v| v.as_f64().powi(2)).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm <= max_norm {
        return;
    }
    let s = T::of(max_norm / norm);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if let Some(g) = store.get_mut(id).grad.as_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}
