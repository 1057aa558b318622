// Walk the layout of a packed scene: header, Deflated camera block, and
// each latent stream against its ideal code length.
//
// cargo run --release --example inspect_bitstream

use codecsplat::cli::{inspect_bytes, InspectReport};
use codecsplat::model::Model;
use codecsplat::pipeline::encode_scene;
use codecsplat::training::{generate_scene, SyntheticConfig};

pub const STAGE2_CHECKPOINT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage2.csck");

pub fn run_example() -> codecsplat::Result<InspectReport> {
    let model = Model::<f32>::load(STAGE2_CHECKPOINT)?;
    let scene = generate_scene(77, &SyntheticConfig::default())?;
    let bytes = encode_scene(&model, &scene.context, 512.0)?.bytes;
    let report = inspect_bytes(&bytes, Some(&model))?;
    println!("file {} B = header {} + cameras {} + streams", report.file_bytes, report.header_bytes, report.camera_block_bytes);
    for s in &report.streams {
        println!(
            "  view {} level {}: {:>5} B, ideal {:>7.1} B, {:.3} bits/symbol",
            s.view,
            s.level,
            s.bytes,
            s.ideal_bytes.unwrap_or(f64::NAN),
            s.bits_per_symbol.unwrap_or(f64::NAN)
        );
    }
    Ok(report)
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    run_example().map(|_| ())
}
