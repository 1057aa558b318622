use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::gaussians::metrics::{psnr, ssim};
use crate::gaussians::{render, RenderSettings};
use crate::geometry::Camera;
use crate::model::Model;
use crate::pipeline::{decode_scene, encode_scene, DecodedScene};
use crate::tensors::{Graph, Real, Tensor};

use super::synthetic::SyntheticScene;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ViewQuality {
    pub psnr: f64,
    pub ssim: f64,
}

fn mean_quality(items: &[ViewQuality]) -> ViewQuality {
    let n = items.len().max(1) as f64;
    ViewQuality {
        psnr: items.iter().map(|q| q.psnr).sum::<f64>() / n,
        ssim: items.iter().map(|q| q.ssim).sum::<f64>() / n,
    }
}

fn quality(rendered: &Tensor<f32>, reference: &Tensor<f32>) -> Result<ViewQuality> {
    Ok(ViewQuality { psnr: psnr(rendered, reference)?, ssim: ssim(rendered, reference)? })
}

/// Target-view quality of the codec-free path, averaged over `scenes`.
pub fn eval_codec_free<T: Real>(model: &Model<T>, scenes: &[SyntheticScene]) -> Result<ViewQuality> {
    let mut out = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let g = Graph::<T>::new();
        let enc = model.encode_views(&g, &scene.context)?;
        let set = model.gaussians_from_depth(&g, &enc.f_c, &enc.enc.d_enc, &scene.cameras())?;
        let t = &scene.target;
        let img = render(&g, &set, &t.camera, t.height(), t.width(), &RenderSettings::default())?;
        out.push(quality(&g.value(img.image).cast(), &t.image)?);
    }
    Ok(mean_quality(&out))
}

/// Render decoded Gaussians into any camera at the bitstream resolution.
pub fn render_decoded(decoded: &DecodedScene, camera: &Camera) -> Result<Tensor<f32>> {
    decoded.gaussians.render(camera, decoded.height, decoded.width, &RenderSettings::default())
}

/// One operating point of a rate–distortion sweep, averaged over scenes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdRow {
    pub lambda: f64,
    /// Packed `.csplat` length per scene.
    pub bytes: f64,
    /// Ideal code length of the latent streams per scene.
    pub estimated_bytes: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Encode, pack, decode and render every scene at every λ.
pub fn eval_rd<T: Real>(model: &Model<T>, scenes: &[SyntheticScene], grid: &[f64]) -> Result<Vec<RdRow>> {
    let mut rows = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let (mut bytes, mut est) = (0.0, 0.0);
        let mut q = Vec::with_capacity(scenes.len());
        for scene in scenes {
            let enc = encode_scene(model, &scene.context, lambda)?;
            bytes += enc.bytes.len() as f64;
            est += enc.estimated_bits.iter().flatten().sum::<f64>() / 8.0;
            let dec = decode_scene(model, &enc.bytes)?;
            q.push(quality(&render_decoded(&dec, &scene.target.camera)?, &scene.target.image)?);
        }
        let n = scenes.len().max(1) as f64;
        let mq = mean_quality(&q);
        rows.push(RdRow { lambda, bytes: bytes / n, estimated_bytes: est / n, psnr: mq.psnr, ssim: mq.ssim });
    }
    Ok(rows)
}

pub const RD_CSV_HEADER: &str = "lambda,bytes_per_scene,estimated_bytes_per_scene,psnr_db,ssim";

pub fn write_rd_csv(rows: &[RdRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{RD_CSV_HEADER}")?;
    for r in rows {
        writeln!(f, "{},{:.1},{:.1},{:.4},{:.5}", r.lambda, r.bytes, r.estimated_bytes, r.psnr, r.ssim)?;
    }
    f.flush()?;
    Ok(())
}
