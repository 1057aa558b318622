// Rate-distortion sweep of the shipped model over the 7-point λ grid,
// next to the codec-free upper bound and the naive f16+Deflate size.
//
// cargo run --release --example rd_sweep [scenes]

use codecsplat::codec::LAMBDA_GRID;
use codecsplat::model::Model;
use codecsplat::pipeline::naive_feature_bytes;
use codecsplat::training::{eval_codec_free, eval_rd, scene_sets, RdRow, TrainingConfig};

pub const STAGE1_CHECKPOINT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage1.csck");
pub const STAGE2_CHECKPOINT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage2.csck");

pub fn rd_sweep(scenes: usize) -> codecsplat::Result<Vec<RdRow>> {
    let model = Model::<f32>::load(STAGE2_CHECKPOINT)?;
    let mut cfg = TrainingConfig::new(2, 0, 1);
    cfg.train_scenes = 1;
    cfg.eval_scenes = scenes;
    let (_, eval) = scene_sets(&cfg)?;
    let rows = eval_rd(&model, &eval, &LAMBDA_GRID)?;
    let free = eval_codec_free(&Model::<f32>::load(STAGE1_CHECKPOINT)?, &eval)?;
    let naive = eval.iter().map(|s| naive_feature_bytes(&model, &s.context)).sum::<codecsplat::Result<usize>>()?
        as f64
        / eval.len() as f64;
    println!("{:>6} {:>9} {:>9} {:>7} {:>7}", "λ", "bytes", "est.", "PSNR", "SSIM");
    for r in &rows {
        println!("{:>6} {:>9.1} {:>9.1} {:>7.2} {:>7.4}", r.lambda, r.bytes, r.estimated_bytes, r.psnr, r.ssim);
    }
    println!("codec-free PSNR {:.2} dB, SSIM {:.4}; naive F_c {naive:.0} bytes", free.psnr, free.ssim);
    Ok(rows)
}

pub fn run_example() -> codecsplat::Result<Vec<RdRow>> {
    rd_sweep(2)
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    let scenes = std::env::args().nth(1).map_or(8, |s| s.parse().expect("scene count"));
    rd_sweep(scenes).map(|_| ())
}
