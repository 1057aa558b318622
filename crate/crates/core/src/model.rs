//! The full network: encoder-side backbone, feature codec, and decoder heads.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, BackboneConfig, EncoderOutputs, Refiner};
use crate::codec::{Codec, CodecConfig};
use crate::error::{Error, Result};
use crate::gaussians::{map_2d_to_3d, merge, DepthHead, GaussianVars, GsHead};
use crate::geometry::{denormalize_depth, Camera, ContextView, MetricDepth, NormDepth};
use crate::tensors::{read_checkpoint, write_checkpoint, Graph, ParamGroup, ParamStore, Real, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub codec: CodecConfig,
}

impl Default for ModelConfig {
    /// Desk-scale widths.
    fn default() -> Self {
        Self {
            backbone: BackboneConfig { mv_channels: 16, feature_channels: 16, candidates: 16, match_temperature: 10.0 },
            codec: CodecConfig { feature_channels: 16, latent_channels: 32, hyper_channels: 16, ..Default::default() },
        }
    }
}

impl ModelConfig {
    fn to_meta(self) -> Vec<(String, String)> {
        let b = self.backbone;
        let c = self.codec;
        [
            ("model.mv_channels", b.mv_channels.to_string()),
            ("model.feature_channels", b.feature_channels.to_string()),
            ("model.candidates", b.candidates.to_string()),
            ("model.match_temperature", b.match_temperature.to_string()),
            ("model.latent_channels", c.latent_channels.to_string()),
            ("model.hyper_channels", c.hyper_channels.to_string()),
            ("model.alphabet_bound", c.alphabet_bound.to_string()),
            ("model.sigma_min", c.sigma_min.to_string()),
            ("model.p_min", c.p_min.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn from_meta(meta: &HashMap<String, String>) -> Result<Self> {
        fn get<V: std::str::FromStr>(meta: &HashMap<String, String>, key: &str) -> Result<V> {
            let raw = meta.get(key).ok_or_else(|| Error::Checkpoint(format!("metadata key '{key}' missing")))?;
            raw.parse().map_err(|_| Error::Checkpoint(format!("metadata key '{key}' has bad value '{raw}'")))
        }
        let feature_channels = get(meta, "model.feature_channels")?;
        Ok(Self {
            backbone: BackboneConfig {
                mv_channels: get(meta, "model.mv_channels")?,
                feature_channels,
                candidates: get(meta, "model.candidates")?,
                match_temperature: get(meta, "model.match_temperature")?,
            },
            codec: CodecConfig {
                feature_channels,
                latent_channels: get(meta, "model.latent_channels")?,
                hyper_channels: get(meta, "model.hyper_channels")?,
                alphabet_bound: get(meta, "model.alphabet_bound")?,
                sigma_min: get(meta, "model.sigma_min")?,
                p_min: get(meta, "model.p_min")?,
            },
        })
    }
}

/// Which training stage produced a set of weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Init,
    CodecFree,
    CodecAware,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Init => "0",
            Stage::CodecFree => "1",
            Stage::CodecAware => "2",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(Stage::Init),
            "1" => Ok(Stage::CodecFree),
            "2" => Ok(Stage::CodecAware),
            other => Err(Error::Checkpoint(format!("unknown stage '{other}'"))),
        }
    }
}

/// Decoder-side products for a set of views.
pub struct DecodedViews {
    pub gaussians: GaussianVars,
    /// Predicted normalized inverse depth per view.
    pub s: Vec<NormDepth>,
    pub depth: Vec<MetricDepth>,
}

/// Encoder-side products for a set of views.
pub struct EncodedViews {
    pub enc: EncoderOutputs,
    /// Refined Gaussian-generation feature `F_c` per view.
    pub f_c: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub stage: Stage,
    pub store: ParamStore<T>,
    pub backbone: Backbone,
    pub codec: Codec,
    pub refine_post: Refiner,
    pub depth_head: DepthHead,
    pub gs_head: GsHead,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.codec.feature_channels != config.backbone.feature_channels {
            return Err(Error::Config(format!(
                "codec feature channels {} differ from backbone feature channels {}",
                config.codec.feature_channels, config.backbone.feature_channels
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let cf = config.backbone.feature_channels;
        let backbone = Backbone::new(&mut store, config.backbone, &mut rng)?;
        let codec = Codec::new(&mut store, config.codec, &mut rng)?;
        let refine_post = Refiner::new(&mut store, "decoder.refine_post", ParamGroup::Decoder, cf, &mut rng)?;
        let depth_head = DepthHead::new(&mut store, cf, &mut rng)?;
        let gs_head = GsHead::new(&mut store, cf, &mut rng)?;
        Ok(Self { config, stage: Stage::Init, store, backbone, codec, refine_post, depth_head, gs_head })
    }

    /// Same weights at another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config,
            stage: self.stage,
            store: self.store.cast(),
            backbone: self.backbone.clone(),
            codec: self.codec.clone(),
            refine_post: self.refine_post,
            depth_head: self.depth_head,
            gs_head: self.gs_head,
        }
    }

    /// `F_c = R_pre(F_g, D_enc)` for every context view.
    pub fn encode_views(&self, g: &Graph<T>, views: &[ContextView]) -> Result<EncodedViews> {
        let enc = self.backbone.mv_encode(g, &self.store, views)?;
        let f_g = self.backbone.feat_head(g, &self.store, views, &enc)?;
        let cams: Vec<Camera> = views.iter().map(|v| v.camera).collect();
        let f_c = self.backbone.refine_pre.forward(g, &self.store, &f_g, &enc.d_enc, &cams)?;
        Ok(EncodedViews { enc, f_c })
    }

    /// Gaussians from features and the given depth, without the decoder-side
    /// depth head or post-refiner (the codec-free path).
    pub fn gaussians_from_depth(&self, g: &Graph<T>, features: &[Var], depth: &[MetricDepth], cameras: &[Camera]) -> Result<GaussianVars> {
        let mut sets = Vec::with_capacity(features.len());
        for ((&f, &d), cam) in features.iter().zip(depth).zip(cameras) {
            let attrs = self.gs_head.forward(g, &self.store, f, d, cam)?;
            sets.push(map_2d_to_3d(g, d, &attrs, cam)?);
        }
        merge(g, &sets)
    }

    /// Decoder path: `S = σ(DepthHead(F̂))`, `F_dec = R_post(F̂, D̂)`, then
    /// `GSHead(F_dec, D̂)` mapped to 3D. Consumes only reconstructed features
    /// and cameras.
    pub fn decode_views(&self, g: &Graph<T>, f_hat: &[Var], cameras: &[Camera]) -> Result<DecodedViews> {
        if f_hat.len() != cameras.len() || f_hat.is_empty() {
            return Err(Error::shape("decode_views", format!("{} features for {} cameras", f_hat.len(), cameras.len())));
        }
        let mut s = Vec::with_capacity(f_hat.len());
        let mut depth = Vec::with_capacity(f_hat.len());
        for (&f, cam) in f_hat.iter().zip(cameras) {
            let si = self.depth_head.forward(g, &self.store, f)?;
            depth.push(denormalize_depth(g, si, cam.near, cam.far));
            s.push(si);
        }
        let f_dec = self.refine_post.forward(g, &self.store, f_hat, &depth, cameras)?;
        let mut sets = Vec::with_capacity(f_hat.len());
        for ((&f, &d), cam) in f_dec.iter().zip(&depth).zip(cameras) {
            let attrs = self.gs_head.forward(g, &self.store, f, d, cam)?;
            sets.push(map_2d_to_3d(g, d, &attrs, cam)?);
        }
        Ok(DecodedViews { gaussians: merge(g, &sets)?, s, depth })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut meta = self.config.to_meta();
        meta.push(("stage".into(), self.stage.as_str().into()));
        let file = std::fs::File::create(path)?;
        write_checkpoint(&self.store, &meta, std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Rebuild the architecture from the checkpoint metadata and copy every
    /// stored tensor into it; names and shapes must match exactly.
    pub fn read(r: impl std::io::Read) -> Result<Self> {
        let (stored, meta) = read_checkpoint::<T, _>(r)?;
        let meta: HashMap<String, String> = meta.into_iter().collect();
        let config = ModelConfig::from_meta(&meta)?;
        let stage = Stage::parse(meta.get("stage").map(String::as_str).unwrap_or("0"))?;
        let mut model = Self::new(config, 0)?;
        model.stage = stage;
        if stored.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                stored.len(),
                model.store.len()
            )));
        }
        for (_, p) in stored.iter() {
            let id = model
                .store
                .lookup(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter '{}'", p.name)))?;
            model.store.set_value(id, p.tensor.as_ref().clone())?;
        }
        Ok(model)
    }
}
