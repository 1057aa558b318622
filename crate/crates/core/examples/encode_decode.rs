// Compress a synthetic scene to a `.csplat` at one rate point, decode it
// from the bytes alone, and render the held-out target view.
//
// cargo run --release --example encode_decode [lambda]

use codecsplat::gaussians::io::write_ppm;
use codecsplat::gaussians::metrics::psnr;
use codecsplat::model::Model;
use codecsplat::pipeline::{decode_scene, encode_scene};
use codecsplat::training::{generate_scene, render_decoded, SyntheticConfig};

pub const STAGE2_CHECKPOINT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage2.csck");

pub struct EncodeDecodeSummary {
    pub bytes: usize,
    pub gaussians: usize,
    pub target_psnr: f64,
}

pub fn encode_decode(lambda: f64) -> codecsplat::Result<EncodeDecodeSummary> {
    let model = Model::<f32>::load(STAGE2_CHECKPOINT)?;
    let scene = generate_scene(4242, &SyntheticConfig::default())?;

    let encoded = encode_scene(&model, &scene.context, lambda)?;
    let path = std::env::temp_dir().join("codecsplat_encode_decode.csplat");
    std::fs::write(&path, &encoded.bytes)?;

    let decoded = decode_scene(&model, &std::fs::read(&path)?)?;
    let target = render_decoded(&decoded, &scene.target.camera)?;
    write_ppm(std::env::temp_dir().join("codecsplat_encode_decode_target.ppm"), &target)?;
    let summary = EncodeDecodeSummary {
        bytes: encoded.bytes.len(),
        gaussians: decoded.gaussians.len(),
        target_psnr: psnr(&target, &scene.target.image)?,
    };
    let t = encoded.timings;
    println!(
        "λ={lambda}: {} bytes for {} views, {} Gaussians, target PSNR {:.2} dB",
        summary.bytes,
        scene.context.len(),
        summary.gaussians,
        summary.target_psnr
    );
    println!(
        "generation {:.1} ms, compression {:.1} ms, decompression {:.1} ms",
        t.generation.as_secs_f64() * 1e3,
        t.compression.as_secs_f64() * 1e3,
        decoded.timings.decompression.as_secs_f64() * 1e3
    );
    Ok(summary)
}

pub fn run_example() -> codecsplat::Result<EncodeDecodeSummary> {
    encode_decode(128.0)
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    let lambda = std::env::args().nth(1).map_or(Ok(128.0), |s| s.parse()).expect("lambda must be a number");
    encode_decode(lambda).map(|_| ())
}
