//! Scene-level encode and decode between posed views and `.csplat` bytes.

use std::time::{Duration, Instant};

use crate::codec::{decode_level, encode_level_measured, inference_bits, RatePoint};
use crate::coder::{naive_tensor_compress, pack, unpack, SceneBitstream};
use crate::error::{Error, Result};
use crate::gaussians::GaussianSet;
use crate::geometry::{scene_dims, Camera, ContextView};
use crate::model::Model;
use crate::tensors::{Graph, Real, Tensor};

/// Wall-clock split matching the usual accounting: Gaussian generation is the
/// feed-forward pass needed before compression.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub generation: Duration,
    pub compression: Duration,
    pub decompression: Duration,
}

pub struct EncodedScene {
    pub bitstream: SceneBitstream,
    pub bytes: Vec<u8>,
    /// Ideal code length under the quantized tables, `[view][level]`, in bits.
    pub estimated_bits: Vec<Vec<f64>>,
    pub timings: Timings,
}

/// λ as the decoder will see it after the `f32` round trip.
fn stored_rate(lambda: f64) -> Result<RatePoint> {
    RatePoint::new(lambda as f32 as f64)
}

pub fn encode_scene<T: Real>(model: &Model<T>, views: &[ContextView], lambda: f64) -> Result<EncodedScene> {
    let rate = stored_rate(lambda)?;
    let (height, width) = scene_dims(views)?;
    let start = Instant::now();
    let g = Graph::<T>::new();
    let encoded = model.encode_views(&g, views)?;
    let generation = start.elapsed();

    let start = Instant::now();
    let bound = model.config.codec.alphabet_bound;
    let mut streams = Vec::with_capacity(views.len());
    let mut estimated_bits = Vec::with_capacity(views.len());
    for &f_c in &encoded.f_c {
        let (stack, dists) = model.codec.encode_latents(&g, &model.store, f_c, rate)?;
        let mut view_streams = Vec::with_capacity(stack.levels.len());
        let mut view_bits = Vec::with_capacity(stack.levels.len());
        for (level, dist) in stack.levels.iter().zip(&dists) {
            let (bytes, bits) = encode_level_measured(level, dist, bound)?;
            view_streams.push(bytes);
            view_bits.push(bits);
        }
        streams.push(view_streams);
        estimated_bits.push(view_bits);
    }
    let bitstream = SceneBitstream {
        lambda: rate.lambda() as f32,
        height,
        width,
        cameras: views.iter().map(|v| v.camera.to_f32_precision()).collect(),
        streams,
    };
    let bytes = pack(&bitstream)?;
    let compression = start.elapsed();
    Ok(EncodedScene {
        bitstream,
        bytes,
        estimated_bits,
        timings: Timings { generation, compression, decompression: Duration::ZERO },
    })
}

pub struct DecodedScene {
    pub gaussians: GaussianSet,
    /// Cameras as stored in the bitstream.
    pub cameras: Vec<Camera>,
    pub height: usize,
    pub width: usize,
    /// Reconstructed features `F̂_c`, one `[C_F, H, W]` per view.
    pub features: Vec<Tensor<f32>>,
    /// Decoded normalized inverse depth, one `[1, H, W]` per view.
    pub norm_depth: Vec<Tensor<f32>>,
    pub timings: Timings,
}

/// Reconstructed features from the bitstream alone.
pub fn decode_features<T: Real>(g: &Graph<T>, model: &Model<T>, scene: &SceneBitstream) -> Result<Vec<crate::tensors::Var>> {
    let rate = RatePoint::new(scene.lambda as f64)?;
    let codec = &model.codec;
    let bound = codec.config.alphabet_bound;
    let [hyper_shape, main_shape] = codec.latent_shapes(scene.height, scene.width);
    let mut out = Vec::with_capacity(scene.streams.len());
    for (view, streams) in scene.streams.iter().enumerate() {
        if streams.len() != 2 {
            return Err(Error::Format(format!("view {view} has {} latent levels, expected 2", streams.len())));
        }
        let hyper_dist = codec.hyper_distribution(g, &model.store, rate, hyper_shape)?;
        let hyper = decode_level(&streams[0], hyper_shape, &hyper_dist, bound)?;
        let main_dist = codec.main_symbol_distribution(g, &model.store, rate, &hyper)?;
        let main = decode_level(&streams[1], main_shape, &main_dist, bound)?;
        out.push(codec.decode_feature(g, &model.store, rate, &main)?);
    }
    Ok(out)
}

/// Symbol count and ideal code length of one coded latent level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelStats {
    pub symbols: usize,
    pub ideal_bits: f64,
}

/// Per-stream statistics recovered by decoding the symbols, `[view][level]`.
pub fn level_stats<T: Real>(model: &Model<T>, scene: &SceneBitstream) -> Result<Vec<Vec<LevelStats>>> {
    let g = Graph::<T>::new();
    let rate = RatePoint::new(scene.lambda as f64)?;
    let codec = &model.codec;
    let bound = codec.config.alphabet_bound;
    let [hyper_shape, main_shape] = codec.latent_shapes(scene.height, scene.width);
    let mut out = Vec::with_capacity(scene.streams.len());
    for (view, streams) in scene.streams.iter().enumerate() {
        if streams.len() != 2 {
            return Err(Error::Format(format!("view {view} has {} latent levels, expected 2", streams.len())));
        }
        let hyper_dist = codec.hyper_distribution(&g, &model.store, rate, hyper_shape)?;
        let hyper = decode_level(&streams[0], hyper_shape, &hyper_dist, bound)?;
        let main_dist = codec.main_symbol_distribution(&g, &model.store, rate, &hyper)?;
        let main = decode_level(&streams[1], main_shape, &main_dist, bound)?;
        out.push(vec![
            LevelStats { symbols: hyper.symbols.len(), ideal_bits: inference_bits(&hyper, &hyper_dist, bound)? },
            LevelStats { symbols: main.symbols.len(), ideal_bits: inference_bits(&main, &main_dist, bound)? },
        ]);
    }
    Ok(out)
}

/// Decode packed bytes into Gaussians. Needs nothing but the bytes and the model.
pub fn decode_scene<T: Real>(model: &Model<T>, bytes: &[u8]) -> Result<DecodedScene> {
    let start = Instant::now();
    let scene = unpack(bytes)?;
    if scene.cameras.len() != scene.streams.len() {
        return Err(Error::Format(format!("{} cameras for {} streams", scene.cameras.len(), scene.streams.len())));
    }
    let g = Graph::<T>::new();
    let f_hat = decode_features(&g, model, &scene)?;
    let decompression = start.elapsed();

    let start = Instant::now();
    let decoded = model.decode_views(&g, &f_hat, &scene.cameras)?;
    let gaussians = GaussianSet::from_vars(&g, &decoded.gaussians);
    let generation = start.elapsed();
    Ok(DecodedScene {
        gaussians,
        cameras: scene.cameras.clone(),
        height: scene.height,
        width: scene.width,
        features: f_hat.iter().map(|&v| g.value(v).cast()).collect(),
        norm_depth: decoded.s.iter().map(|s| g.value(s.0).cast()).collect(),
        timings: Timings { generation, compression: Duration::ZERO, decompression },
    })
}

/// Size of the naive alternative: every `F_c` stored as `f16` and Deflated.
pub fn naive_feature_bytes<T: Real>(model: &Model<T>, views: &[ContextView]) -> Result<usize> {
    let g = Graph::<T>::new();
    let encoded = model.encode_views(&g, views)?;
    Ok(encoded.f_c.iter().map(|&v| naive_tensor_compress(g.value(v).as_ref()).len()).sum())
}
