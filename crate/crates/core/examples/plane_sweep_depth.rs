// Plane-sweep depth from two synthetic views, with and without trained
// weights, scored against the raycast ground truth.
//
// cargo run --release --example plane_sweep_depth

use codecsplat::geometry::normalize;
use codecsplat::model::{Model, ModelConfig};
use codecsplat::tensors::Graph;
use codecsplat::training::{generate_scene, SyntheticConfig, SyntheticScene};

pub const STAGE1_CHECKPOINT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/desk_stage1.csck");

pub struct DepthSummary {
    /// Mean `|Ŝ − S|` in normalized inverse depth, untrained and trained.
    pub untrained: f64,
    pub trained: f64,
}

fn inverse_depth_l1(model: &Model<f32>, scene: &SyntheticScene) -> codecsplat::Result<f64> {
    let g = Graph::<f32>::new();
    let enc = model.encode_views(&g, &scene.context)?;
    let (mut err, mut n) = (0.0, 0usize);
    for ((d, truth), view) in enc.enc.d_enc.iter().zip(&scene.context_depth).zip(&scene.context) {
        let (near, far) = (view.camera.near, view.camera.far);
        for (&p, &t) in g.value(d.0).data().iter().zip(truth.data()) {
            err += (normalize(p as f64, near, far) - normalize(t as f64, near, far)).abs();
            n += 1;
        }
    }
    Ok(err / n as f64)
}

pub fn run_example() -> codecsplat::Result<DepthSummary> {
    let cfg = SyntheticConfig::default();
    let scenes: Vec<_> = (0..8).map(|i| generate_scene(9000 + i, &cfg)).collect::<Result<_, _>>()?;
    let untrained = Model::<f32>::new(ModelConfig::default(), 1)?;
    let trained = Model::<f32>::load(STAGE1_CHECKPOINT)?;
    let mean = |m: &Model<f32>| -> codecsplat::Result<f64> {
        Ok(scenes.iter().map(|s| inverse_depth_l1(m, s)).sum::<codecsplat::Result<f64>>()? / scenes.len() as f64)
    };
    let summary = DepthSummary { untrained: mean(&untrained)?, trained: mean(&trained)? };
    println!(
        "mean |Ŝ − S| (normalized inverse depth) over {} scenes: untrained {:.3}, trained {:.3}",
        scenes.len(),
        summary.untrained,
        summary.trained
    );
    Ok(summary)
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    run_example().map(|_| ())
}
