//! The `codecsplat` command line.
//!
//! Every subcommand prints a human summary by default and a single JSON
//! document with `--json`. Usage errors exit with 2, runtime failures with 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::builder::StyledStr;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::bundle::{read_cameras, write_synthetic, SceneBundle};
use crate::codec::{LAMBDA_GRID, LAMBDA_MAX, LAMBDA_MIN};
use crate::coder::{unpack_with_layout, SceneBitstream};
use crate::error::{Error, Result};
use crate::gaussians::io::{write_ply, write_ppm};
use crate::geometry::Camera;
use crate::model::Model;
use crate::pipeline::{decode_scene, encode_scene, level_stats, Timings};
use crate::training::{eval_codec_free, eval_rd, generate_synthetic, render_decoded, scene_sets, train, write_rd_csv};
use crate::training::{SyntheticConfig, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "codecsplat", version, about = "Feed-forward Gaussian splatting with a compressed scene bitstream")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a scene bundle into a `.csplat` bitstream.
    Encode(EncodeArgs),
    /// Decode a `.csplat` into Gaussians and render views.
    Decode(DecodeArgs),
    /// Run one training stage.
    Train(TrainArgs),
    /// Rate-distortion sweep over the 7-point λ grid.
    EvalRd(EvalRdArgs),
    /// Write synthetic scene bundles.
    GenSynthetic(GenSyntheticArgs),
    /// Dump the structure of a `.csplat`.
    Inspect(InspectArgs),
}

fn parse_lambda(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&v) {
        return Err(format!("λ must lie in [{LAMBDA_MIN}, {LAMBDA_MAX}], got {v}"));
    }
    Ok(v)
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Bundle directory with view_i.ppm and cameras.txt.
    pub scene: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
    /// Report the median of 3 timed runs.
    #[arg(long)]
    pub bench: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Camera file to render; defaults to the cameras stored in the stream.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Output directory for render_i.ppm.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the Gaussians as a PLY file.
    #[arg(long)]
    pub ply: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub stage: Option<u8>,
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalRdArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Take image size and depth range from a training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub input: PathBuf,
    /// Needed for ideal-entropy statistics.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.kind() == ErrorKind::ValueValidation {
                eprintln!("\n{}", usage(&args));
            }
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Usage line of the subcommand named in `args`, or of the whole tool.
fn usage(args: &[OsString]) -> StyledStr {
    let mut cmd = Cli::command();
    cmd.build();
    let sub = args.iter().skip(1).filter_map(|a| a.to_str()).find(|a| cmd.find_subcommand(a).is_some());
    match sub.and_then(|name| cmd.find_subcommand_mut(name)) {
        Some(sub) => sub.render_usage(),
        None => cmd.render_usage(),
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Train(a) => cmd_train(a),
        Command::EvalRd(a) => cmd_eval_rd(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn print_json<S: Serialize>(value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Serialize)]
pub struct TimingReport {
    pub generation_ms: f64,
    pub compression_ms: f64,
    pub decompression_ms: f64,
    pub runs: usize,
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

#[derive(Debug, Serialize)]
pub struct EncodeReport {
    pub out: PathBuf,
    pub lambda: f32,
    pub views: usize,
    pub height: usize,
    pub width: usize,
    pub bytes: usize,
    pub estimated_bytes: f64,
    /// Packed length of each stream, `[view][level]`, prefix included.
    pub stream_bytes: Vec<Vec<usize>>,
    pub timings: TimingReport,
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let bundle = SceneBundle::read(&a.scene)?;
    let model = Model::<f32>::load(&a.checkpoint)?;
    let runs = if a.bench { 3 } else { 1 };
    let mut t: Vec<Timings> = Vec::with_capacity(runs);
    let mut encoded = None;
    for _ in 0..runs {
        let enc = encode_scene(&model, &bundle.views, a.lambda)?;
        let dec = decode_scene(&model, &enc.bytes)?;
        t.push(Timings { decompression: dec.timings.decompression, ..enc.timings });
        encoded = Some(enc);
    }
    let enc = encoded.expect("at least one run");
    std::fs::write(&a.out, &enc.bytes)?;
    let written = std::fs::metadata(&a.out)?.len() as usize;
    let (_, layout) = unpack_with_layout(&enc.bytes)?;
    let report = EncodeReport {
        out: a.out.clone(),
        lambda: enc.bitstream.lambda,
        views: bundle.views.len(),
        height: enc.bitstream.height,
        width: enc.bitstream.width,
        bytes: written,
        estimated_bytes: enc.estimated_bits.iter().flatten().sum::<f64>() / 8.0,
        stream_bytes: layout.streams,
        timings: TimingReport {
            generation_ms: ms(median(t.iter().map(|x| x.generation).collect())),
            compression_ms: ms(median(t.iter().map(|x| x.compression).collect())),
            decompression_ms: ms(median(t.iter().map(|x| x.decompression).collect())),
            runs,
        },
    };
    if a.json {
        return print_json(&report);
    }
    println!(
        "wrote {} ({} bytes, {} views at {}x{}, λ={})",
        report.out.display(),
        report.bytes,
        report.views,
        report.width,
        report.height,
        report.lambda
    );
    println!("estimated latent bytes {:.1}", report.estimated_bytes);
    let tm = &report.timings;
    println!(
        "timing ({} run{}): generation {:.2} ms, compression {:.2} ms, decompression {:.2} ms",
        tm.runs,
        if tm.runs == 1 { "" } else { "s, median" },
        tm.generation_ms,
        tm.compression_ms,
        tm.decompression_ms
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct DecodeReport {
    pub gaussians: usize,
    pub renders: Vec<PathBuf>,
    pub ply: Option<PathBuf>,
    pub generation_ms: f64,
    pub decompression_ms: f64,
}

fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input)?;
    let model = Model::<f32>::load(&a.checkpoint)?;
    let decoded = decode_scene(&model, &bytes)?;
    let cameras = match &a.cameras {
        Some(p) => read_cameras(p)?,
        None => decoded.cameras.clone(),
    };
    std::fs::create_dir_all(&a.out)?;
    let mut renders = Vec::with_capacity(cameras.len());
    for (i, cam) in cameras.iter().enumerate() {
        let path = a.out.join(format!("render_{i}.ppm"));
        write_ppm(&path, &render_decoded(&decoded, cam)?)?;
        renders.push(path);
    }
    if let Some(p) = &a.ply {
        write_ply(p, &decoded.gaussians)?;
    }
    let report = DecodeReport {
        gaussians: decoded.gaussians.len(),
        renders,
        ply: a.ply.clone(),
        generation_ms: ms(decoded.timings.generation),
        decompression_ms: ms(decoded.timings.decompression),
    };
    if a.json {
        return print_json(&report);
    }
    println!("decoded {} Gaussians; rendered {} views to {}", report.gaussians, report.renders.len(), a.out.display());
    println!(
        "timing: decompression {:.2} ms, generation {:.2} ms",
        report.decompression_ms, report.generation_ms
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub stage: u8,
    pub steps: usize,
    pub out: PathBuf,
    pub final_loss: f64,
    pub heldout_psnr: f64,
    pub heldout_ssim: f64,
    pub seconds: f64,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = TrainingConfig::load(&a.config)?;
    if let Some(s) = a.stage {
        cfg.stage = s;
    }
    if let Some(p) = &a.init {
        cfg.init = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.out = Some(p.clone());
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.steps {
        cfg.steps = n;
    }
    cfg.validate()?;
    let out = cfg.out.clone().ok_or_else(|| Error::Config("no output checkpoint: set 'out' or pass --out".into()))?;
    let start = std::time::Instant::now();
    let mut last = 0.0;
    let every = cfg.log_every.max(1);
    let quiet = a.json;
    let model = train(&cfg, |s| {
        last = s.loss;
        if !quiet && s.step % every == 0 {
            eprintln!("step {:>6}  loss {:.5}  mse {:.5}  bits {:.0}  lr {:.2e}", s.step, s.loss, s.render_mse, s.bits, s.lr);
        }
    })?;
    let seconds = start.elapsed().as_secs_f64();
    let (_, eval) = scene_sets(&cfg)?;
    let q = eval_codec_free(&model, &eval)?;
    let report = TrainReport {
        stage: cfg.stage,
        steps: cfg.steps,
        out,
        final_loss: last,
        heldout_psnr: q.psnr,
        heldout_ssim: q.ssim,
        seconds,
    };
    if a.json {
        return print_json(&report);
    }
    println!(
        "stage {} done in {:.1} s; held-out codec-free PSNR {:.2} dB, SSIM {:.4}; saved {}",
        report.stage,
        report.seconds,
        report.heldout_psnr,
        report.heldout_ssim,
        report.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RdPoint {
    pub lambda: f64,
    pub bytes_per_scene: f64,
    pub estimated_bytes_per_scene: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

fn cmd_eval_rd(a: &EvalRdArgs) -> Result<()> {
    let cfg = TrainingConfig::load(&a.config)?;
    let eval = generate_synthetic(cfg.seed.wrapping_add(1), cfg.eval_scenes, &cfg.scene)?;
    let model = Model::<f32>::load(&a.checkpoint)?;
    let rows = eval_rd(&model, &eval, &LAMBDA_GRID)?;
    write_rd_csv(&rows, &a.out)?;
    let points: Vec<RdPoint> = rows
        .iter()
        .map(|r| RdPoint {
            lambda: r.lambda,
            bytes_per_scene: r.bytes,
            estimated_bytes_per_scene: r.estimated_bytes,
            psnr_db: r.psnr,
            ssim: r.ssim,
        })
        .collect();
    if a.json {
        return print_json(&points);
    }
    println!("{:>6} {:>10} {:>10} {:>8} {:>7}", "lambda", "bytes", "est.bytes", "PSNR", "SSIM");
    for p in &points {
        println!(
            "{:>6} {:>10.1} {:>10.1} {:>8.2} {:>7.4}",
            p.lambda, p.bytes_per_scene, p.estimated_bytes_per_scene, p.psnr_db, p.ssim
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let scene_cfg = match &a.config {
        Some(p) => TrainingConfig::load(p)?.scene,
        None => SyntheticConfig::default(),
    };
    let scenes = generate_synthetic(a.seed, a.count, &scene_cfg)?;
    let mut dirs = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.iter().enumerate() {
        let dir = a.out.join(format!("scene_{i:03}"));
        write_synthetic(s, &dir)?;
        dirs.push(dir);
    }
    if a.json {
        return print_json(&dirs);
    }
    println!("wrote {} scene bundles under {}", dirs.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct CameraReport {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl From<&Camera> for CameraReport {
    fn from(c: &Camera) -> Self {
        let k = c.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            rotation: c.rotation,
            translation: c.translation,
            near: c.near,
            far: c.far,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StreamReport {
    pub view: usize,
    /// 0 is the hyper-latent.
    pub level: usize,
    /// Payload plus the 4-byte length prefix.
    pub bytes: usize,
    pub symbols: Option<usize>,
    pub ideal_bytes: Option<f64>,
    pub bits_per_symbol: Option<f64>,
    /// Actual payload minus ideal length, in bytes.
    pub gap_bytes: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct InspectReport {
    pub file_bytes: usize,
    pub version: u8,
    pub lambda: f32,
    pub levels: usize,
    pub height: usize,
    pub width: usize,
    pub header_bytes: usize,
    pub camera_block_bytes: usize,
    pub camera_payload_raw_bytes: usize,
    pub cameras: Vec<CameraReport>,
    pub streams: Vec<StreamReport>,
    pub total_bytes: usize,
}

/// Structure of a packed stream; `model` adds per-stream entropy statistics.
pub fn inspect_bytes(bytes: &[u8], model: Option<&Model<f32>>) -> Result<InspectReport> {
    let (scene, layout): (SceneBitstream, _) = unpack_with_layout(bytes)?;
    let stats = model.map(|m| level_stats(m, &scene)).transpose()?;
    let mut streams = Vec::new();
    for (v, sizes) in layout.streams.iter().enumerate() {
        for (l, &n) in sizes.iter().enumerate() {
            let st = stats.as_ref().map(|s| s[v][l]);
            streams.push(StreamReport {
                view: v,
                level: l,
                bytes: n,
                symbols: st.map(|s| s.symbols),
                ideal_bytes: st.map(|s| s.ideal_bits / 8.0),
                bits_per_symbol: st.map(|s| s.ideal_bits / s.symbols.max(1) as f64),
                gap_bytes: st.map(|s| (n - 4) as f64 - s.ideal_bits / 8.0),
            });
        }
    }
    Ok(InspectReport {
        file_bytes: bytes.len(),
        version: bytes[4],
        lambda: scene.lambda,
        levels: scene.level_count(),
        height: scene.height,
        width: scene.width,
        header_bytes: layout.header,
        camera_block_bytes: layout.camera_block,
        camera_payload_raw_bytes: layout.camera_payload_raw,
        cameras: scene.cameras.iter().map(CameraReport::from).collect(),
        streams,
        total_bytes: layout.total(),
    })
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input)?;
    let model = a.checkpoint.as_deref().map(Model::<f32>::load).transpose()?;
    let r = inspect_bytes(&bytes, model.as_ref())?;
    if a.json {
        return print_json(&r);
    }
    print_inspect(&a.input, &r);
    Ok(())
}

fn print_inspect(path: &Path, r: &InspectReport) {
    println!("{}: {} bytes", path.display(), r.file_bytes);
    println!("  header        {:>7} B  version {}, λ {}, {} levels", r.header_bytes, r.version, r.lambda, r.levels);
    println!(
        "  camera block  {:>7} B  ({} B raw), {} views at {}x{}",
        r.camera_block_bytes,
        r.camera_payload_raw_bytes,
        r.cameras.len(),
        r.width,
        r.height
    );
    for (i, c) in r.cameras.iter().enumerate() {
        println!(
            "    cam {i}: f=({:.3},{:.3}) c=({:.3},{:.3}) t=({:.4},{:.4},{:.4}) depth [{}, {}]",
            c.fx, c.fy, c.cx, c.cy, c.translation[0], c.translation[1], c.translation[2], c.near, c.far
        );
    }
    for s in &r.streams {
        let name = if s.level == 0 { "hyper" } else { "main" };
        print!("  view {} {:<5}  {:>7} B", s.view, name, s.bytes);
        if let (Some(n), Some(ideal), Some(bps), Some(gap)) = (s.symbols, s.ideal_bytes, s.bits_per_symbol, s.gap_bytes) {
            print!("  {n} symbols, {bps:.3} bits/symbol, ideal {ideal:.1} B, gap {gap:+.1} B");
        }
        println!();
    }
    println!("  total         {:>7} B", r.total_bytes);
}
