// Rasterize a handful of anisotropic Gaussians, write the image as PPM,
// and check that composited weights plus transmittance stay at one.
//
// cargo run --release --example render_gaussians

use codecsplat::gaussians::io::write_ppm;
use codecsplat::gaussians::{render, GaussianVars, RenderSettings};
use codecsplat::geometry::{Camera, Intrinsics};
use codecsplat::tensors::{Graph, Tensor};

pub struct RenderSummary {
    pub path: std::path::PathBuf,
    /// Worst per-pixel `|Σ w + T − 1|`.
    pub conservation_error: f64,
}

pub fn run_example() -> codecsplat::Result<RenderSummary> {
    let (h, w) = (48, 64);
    let k = Intrinsics { fx: 60.0, fy: 60.0, cx: 31.5, cy: 23.5 };
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let cam = Camera::new(k, identity, [0.0, 0.0, 0.0], 0.5, 20.0)?;

    // one row per Gaussian: red blob in front, green sliver, blue backdrop
    let centers = [[-0.3, 0.0, 3.0], [0.2, -0.1, 3.5], [0.0, 0.1, 6.0]];
    let scales = [[0.25, 0.15, 0.1], [0.05, 0.4, 0.05], [1.5, 1.0, 0.1]];
    let rotations = [[0.92, 0.0, 0.0, 0.38], [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];
    let colors = [[0.9, 0.1, 0.1], [0.1, 0.8, 0.2], [0.2, 0.3, 0.9]];
    let opacities = [0.8, 0.7, 0.95];

    let cols = |rows: &[[f64; 3]]| Tensor::from_fn(&[3, rows.len()], |i| rows[i % rows.len()][i / rows.len()]);
    let g = Graph::<f64>::new();
    let vars = GaussianVars {
        centers: g.constant(cols(&centers)),
        scales: g.constant(cols(&scales)),
        rotations: g.constant(Tensor::from_fn(&[4, 3], |i| rotations[i % 3][i / 3])),
        opacities: g.constant(Tensor::new(&[1, 3], opacities.to_vec())?),
        colors: g.constant(cols(&colors)),
    };
    let settings = RenderSettings { min_transmittance: 0.0, ..RenderSettings::default() };
    let out = render(&g, &vars, &cam, h, w, &settings)?;
    let conservation_error = out
        .weight_sum
        .data()
        .iter()
        .zip(out.transmittance.data())
        .map(|(a, t)| (a + t - 1.0).abs())
        .fold(0.0, f64::max);

    let path = std::env::temp_dir().join("codecsplat_render_gaussians.ppm");
    write_ppm(&path, &g.value(out.image))?;
    println!("wrote {} ({w}x{h}); max |Σw + T − 1| = {conservation_error:.2e}", path.display());
    Ok(RenderSummary { path, conservation_error })
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    run_example().map(|_| ())
}
