// Acceptance run: every criterion executes once and prints one PASS/FAIL
// line. Runs without the libtest harness so the lines always show up.

mod common;

#[allow(dead_code)]
mod train_desk {
    include!("../examples/train_desk.rs");
}

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use codecsplat::codec::{decode_level, QuantizedLevel, RatePoint, SymbolDistribution, LAMBDA_GRID};
use codecsplat::coder::{pack, unpack, SceneBitstream};
use codecsplat::model::Model;
use codecsplat::pipeline::{decode_features, encode_scene, naive_feature_bytes};
use codecsplat::tensors::{interval_mass, Graph};
use codecsplat::training::{eval_codec_free, eval_rd, generate_synthetic, scene_sets, RdRow, SyntheticConfig, SyntheticScene};
use common::{coder_cases, fd_cases, geometry_cases, render_cases};

const STAGE1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage1.csck");
const STAGE2: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage2.csck");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stage1() -> &'static Model<f32> {
    static M: OnceLock<Model<f32>> = OnceLock::new();
    M.get_or_init(|| Model::load(STAGE1).expect("stage-1 checkpoint"))
}

fn stage2() -> &'static Model<f32> {
    static M: OnceLock<Model<f32>> = OnceLock::new();
    M.get_or_init(|| Model::load(STAGE2).expect("stage-2 checkpoint"))
}

/// Held-out scenes of the shipped training run.
fn eval_scenes() -> &'static [SyntheticScene] {
    static S: OnceLock<Vec<SyntheticScene>> = OnceLock::new();
    S.get_or_init(|| {
        let (c1, _) = train_desk::configs(0, 0, Path::new("."));
        scene_sets(&c1).expect("scene sets").1
    })
}

fn rd_rows() -> &'static [RdRow] {
    static R: OnceLock<Vec<RdRow>> = OnceLock::new();
    R.get_or_init(|| eval_rd(stage2(), eval_scenes(), &LAMBDA_GRID).expect("eval_rd"))
}

/// Symbols and distributions of every stream, recovered on the decoder side.
fn decode_symbols(model: &Model<f32>, scene: &SceneBitstream) -> Vec<[(QuantizedLevel, SymbolDistribution); 2]> {
    let g = Graph::<f32>::new();
    let rate = RatePoint::new(scene.lambda as f64).unwrap();
    let codec = &model.codec;
    let bound = codec.config.alphabet_bound;
    let [hyper_shape, main_shape] = codec.latent_shapes(scene.height, scene.width);
    scene
        .streams
        .iter()
        .map(|streams| {
            let hd = codec.hyper_distribution(&g, &model.store, rate, hyper_shape).unwrap();
            let hyper = decode_level(&streams[0], hyper_shape, &hd, bound).unwrap();
            let md = codec.main_symbol_distribution(&g, &model.store, rate, &hyper).unwrap();
            let main = decode_level(&streams[1], main_shape, &md, bound).unwrap();
            [(hyper, hd), (main, md)]
        })
        .collect()
}

fn codec_round_trip() -> Outcome {
    let model = stage2();
    let scenes = generate_synthetic(5000, 50, &SyntheticConfig::default()).unwrap();
    let start = Instant::now();
    let mut streams = 0;
    for scene in &scenes {
        let g = Graph::<f32>::new();
        let f_c = model.encode_views(&g, &scene.context).unwrap().f_c;
        for &lambda in &LAMBDA_GRID {
            let encoded = encode_scene(model, &scene.context, lambda).unwrap();
            let unpacked = unpack(&encoded.bytes).unwrap();
            assert_eq!(unpacked, encoded.bitstream, "λ={lambda}: unpack∘pack not field-exact");
            assert_eq!(pack(&unpacked).unwrap(), encoded.bytes, "λ={lambda}: repacking changed the bytes");

            let rate = RatePoint::new(unpacked.lambda as f64).unwrap();
            let decoded = decode_symbols(model, &unpacked);
            let mut first = Vec::new();
            for (view, levels) in decoded.iter().enumerate() {
                let (stack, _) = model.codec.encode_latents(&g, &model.store, f_c[view], rate).unwrap();
                for (l, (level, _)) in levels.iter().enumerate() {
                    assert_eq!(level, &stack.levels[l], "λ={lambda} view {view} level {l}: symbols differ");
                    streams += 1;
                }
                let gd = Graph::<f32>::new();
                let f_hat = model.codec.decode_feature(&gd, &model.store, rate, &levels[1].0).unwrap();
                first.push(gd.value(f_hat));
            }
            let gd = Graph::<f32>::new();
            let second = decode_features(&gd, model, &unpacked).unwrap();
            for (a, &b) in first.iter().zip(&second) {
                let b = gd.value(b);
                let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
                assert!(same, "λ={lambda}: F̂ differs between decodes");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, format!("{} scenes × {} λ, {streams} streams exact, {secs:.1} s", scenes.len(), LAMBDA_GRID.len()))
}

/// Σ −log2 max(p_min, P(ŝ)) under the continuous entropy model.
fn model_bits(level: &QuantizedLevel, dist: &SymbolDistribution, p_min: f64) -> f64 {
    level
        .symbols
        .iter()
        .zip(dist.mu.iter().zip(&dist.sigma))
        .map(|(&s, (&mu, &sigma))| -interval_mass(s as f64, mu, sigma).max(p_min).log2())
        .sum()
}

fn rate_accounting() -> Outcome {
    let model = stage2();
    let p_min = model.codec.config.p_min;
    let (mut worst_slack, mut checked) = (f64::INFINITY, 0);
    for (i, scene) in eval_scenes().iter().enumerate() {
        for &lambda in &LAMBDA_GRID {
            let bytes = encode_scene(model, &scene.context, lambda).unwrap().bytes;
            let bitstream = unpack(&bytes).unwrap();
            for (view, levels) in decode_symbols(model, &bitstream).iter().enumerate() {
                for (l, (level, dist)) in levels.iter().enumerate() {
                    let actual = bitstream.streams[view][l].len() as f64;
                    let estimate = model_bits(level, dist, p_min) / 8.0;
                    let allowed = estimate * 1.02 + 32.0;
                    if actual > allowed {
                        return Err(format!("scene {i} λ={lambda} view {view} level {l}: {actual} bytes, estimate {estimate:.1}"));
                    }
                    worst_slack = worst_slack.min(allowed - actual);
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} streams within bound, tightest slack {worst_slack:.1} bytes"))
}

fn coder_efficiency() -> Outcome {
    coder_cases::shannon_sources();
    let failures = coder_cases::fuzz_round_trips(10_000);
    check(failures == 0, format!("3 sources of 10^5 symbols within 0.1% + 16 bytes of Shannon, {failures} fuzz failures in 10^4"))
}

fn gradient_suite() -> Outcome {
    for (name, case) in fd_cases::ALL {
        if catch_unwind(*case).is_err() {
            return Err(format!("{name} failed"));
        }
    }
    Ok(format!("{} FD groups pass at relative error < 1e-4", fd_cases::ALL.len()))
}

fn geometry_oracles() -> Outcome {
    let warp = geometry_cases::warp_identity_error(20);
    let inverse = geometry_cases::depth_inverse_error();
    let (centers, _) = geometry_cases::backprojection_error(20);
    check(
        warp <= 1e-6 && inverse <= 1e-9 && centers <= 1e-6,
        format!("warp identity {warp:.1e}, depth inverse {inverse:.1e}, backprojection {centers:.1e}"),
    )
}

fn two_stage_training() -> Outcome {
    let (c1, _) = train_desk::configs(0, 0, Path::new("."));
    let init = eval_codec_free(&Model::<f32>::new(c1.model, c1.seed).unwrap(), eval_scenes()).unwrap().psnr;
    let trained = eval_codec_free(stage1(), eval_scenes()).unwrap().psnr;
    let rows = rd_rows();
    let violations = rows.windows(2).filter(|w| w[1].bytes < w[0].bytes || w[1].psnr < w[0].psnr).count();
    check(
        trained - init >= 3.0 && violations == 0,
        format!(
            "stage 1 {init:.2} → {trained:.2} dB (+{:.2}); RD {:.0}–{:.0} bytes, {:.2}–{:.2} dB, {violations} violations",
            trained - init,
            rows[0].bytes,
            rows[rows.len() - 1].bytes,
            rows[0].psnr,
            rows[rows.len() - 1].psnr
        ),
    )
}

fn high_rate_convergence() -> Outcome {
    let free = eval_codec_free(stage1(), eval_scenes()).unwrap().psnr;
    let top = rd_rows().last().unwrap().psnr;
    check(free - top <= 0.5, format!("λ=1024 {top:.2} dB vs codec-free {free:.2} dB (gap {:.2})", free - top))
}

fn naive_ablation() -> Outcome {
    let scenes = eval_scenes();
    let naive = scenes.iter().map(|s| naive_feature_bytes(stage2(), &s.context).unwrap()).sum::<usize>() as f64 / scenes.len() as f64;
    let learned = rd_rows().last().unwrap().bytes;
    let ratio = naive / learned;
    check(ratio >= 50.0, format!("naive {naive:.0} bytes vs λ=1024 {learned:.0} bytes ({ratio:.1}×)"))
}

fn self_containment() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_codecsplat");
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("scene");
    let file = dir.path().join("scene.csplat");
    let renders = dir.path().join("renders");
    let scene = generate_synthetic(606, 1, &SyntheticConfig::default()).unwrap().remove(0);
    codecsplat::bundle::write_synthetic(&scene, &bundle).unwrap();
    let encode = Command::new(bin)
        .args(["encode", bundle.to_str().unwrap(), "--checkpoint", STAGE2, "--lambda", "512", "--out", file.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(encode.status.success(), "encode failed: {}", String::from_utf8_lossy(&encode.stderr));
    std::fs::remove_dir_all(&bundle).unwrap();
    let decode = Command::new(bin)
        .args(["decode", file.to_str().unwrap(), "--checkpoint", STAGE2, "--out", renders.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(decode.status.success(), "decode failed: {}", String::from_utf8_lossy(&decode.stderr));
    let written = (0..scene.context.len()).filter(|i| renders.join(format!("render_{i}.ppm")).is_file()).count();
    check(
        !bundle.exists() && written == scene.context.len(),
        format!("{written} renders from {} bytes with the bundle deleted", std::fs::metadata(&file).unwrap().len()),
    )
}

fn renderer_conservation() -> Outcome {
    let worst = render_cases::worst_conservation_error(200);
    let empty = render_cases::empty_set_is_background();
    check(worst <= 1e-5 && empty, format!("worst |Σw + T − 1| {worst:.1e} over 200 sets, empty set exact: {empty}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("bit-exact codec round trip", codec_round_trip),
        ("rate-accounting bound", rate_accounting),
        ("entropy-coder efficiency", coder_efficiency),
        ("gradient suite", gradient_suite),
        ("geometry oracles", geometry_oracles),
        ("two-stage training", two_stage_training),
        ("high-rate convergence", high_rate_convergence),
        ("naive ablation ordering", naive_ablation),
        ("self-containment", self_containment),
        ("renderer conservation", renderer_conservation),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
