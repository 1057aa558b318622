// Two-stage training at desk scale on synthetic scenes.
//
// `cargo run --release --example train_desk -- --full` reproduces the shipped
// checkpoints in `assets/`. Without `--full` it runs a short smoke schedule
// into the temp directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use codecsplat::model::Model;
use codecsplat::training::{eval_codec_free, scene_sets, train, TrainingConfig};

pub const STAGE1_STEPS: usize = 2000;
pub const STAGE2_STEPS: usize = 10_000;
pub const STAGE2_BETA: f64 = 4e-4;
pub const TRAIN_SCENES: usize = 256;
pub const SEED: u64 = 1;

pub struct TrainSummary {
    pub stage1: PathBuf,
    pub stage2: PathBuf,
    pub init_psnr: f64,
    pub stage1_psnr: f64,
    pub first_loss: [f64; 2],
    pub last_loss: [f64; 2],
}

pub fn configs(stage1_steps: usize, stage2_steps: usize, dir: &Path) -> (TrainingConfig, TrainingConfig) {
    let mut s1 = TrainingConfig::new(1, stage1_steps, SEED);
    s1.train_scenes = TRAIN_SCENES;
    s1.out = Some(dir.join("desk_stage1.csck"));
    let mut s2 = TrainingConfig::new(2, stage2_steps, SEED);
    s2.beta = STAGE2_BETA;
    s2.train_scenes = TRAIN_SCENES;
    s2.init = s1.out.clone();
    s2.out = Some(dir.join("desk_stage2.csck"));
    (s1, s2)
}

pub fn train_desk(stage1_steps: usize, stage2_steps: usize, dir: &Path, verbose: bool) -> codecsplat::Result<TrainSummary> {
    std::fs::create_dir_all(dir)?;
    let (c1, c2) = configs(stage1_steps, stage2_steps, dir);
    let (_, eval) = scene_sets(&c1)?;
    let init_psnr = eval_codec_free(&Model::<f32>::new(c1.model, c1.seed)?, &eval)?.psnr;

    let mut first = [f64::NAN; 2];
    let mut last = [f64::NAN; 2];
    for (i, cfg) in [&c1, &c2].into_iter().enumerate() {
        let start = Instant::now();
        let mut window = 0.0;
        train(cfg, |s| {
            if s.step == 1 {
                first[i] = s.loss;
            }
            last[i] = s.loss;
            window += s.render_mse;
            if verbose && s.step % 250 == 0 {
                println!("stage {} step {:>5}: mse {:.5}, bits {:.0}, lr {:.1e}", cfg.stage, s.step, window / 250.0, s.bits, s.lr);
                window = 0.0;
            }
        })?;
        if verbose {
            println!("stage {} finished in {:.0} s", cfg.stage, start.elapsed().as_secs_f64());
        }
    }
    let stage1 = c1.out.clone().expect("stage-1 output set");
    let stage1_psnr = eval_codec_free(&Model::<f32>::load(&stage1)?, &eval)?.psnr;
    println!("held-out codec-free PSNR: init {init_psnr:.2} dB, after stage 1 {stage1_psnr:.2} dB");
    Ok(TrainSummary {
        stage1,
        stage2: c2.out.clone().expect("stage-2 output set"),
        init_psnr,
        stage1_psnr,
        first_loss: first,
        last_loss: last,
    })
}

pub fn run_example() -> codecsplat::Result<TrainSummary> {
    train_desk(12, 12, &std::env::temp_dir().join("codecsplat_train_desk"), false)
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    if std::env::args().any(|a| a == "--full") {
        let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
        train_desk(STAGE1_STEPS, STAGE2_STEPS, &assets, true).map(|_| ())
    } else {
        run_example().map(|_| ())
    }
}
