use codecsplat::gaussians::{render, GaussianSet, GaussianVars, RenderSettings};
use codecsplat::geometry::{Camera, Intrinsics};
use codecsplat::tensors::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: usize = 20;
pub const W: usize = 28;

pub fn camera() -> Camera {
    let k = Intrinsics { fx: 30.0, fy: 30.0, cx: 13.5, cy: 9.5 };
    let r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    Camera::new(k, r, [0.0; 3], 0.5, 20.0).unwrap()
}

/// Random set with pairwise distinct depths, so the sort order is unique.
pub fn random_set(seed: u64, n: usize) -> GaussianSet {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut depths: Vec<f64> = (0..n).map(|i| 1.5 + i as f64 * 0.37 + r.random_range(0.0..0.2)).collect();
    for i in (1..n).rev() {
        depths.swap(i, r.random_range(0..=i));
    }
    let mut f = |shape: &[usize], lo: f64, hi: f64| Tensor::<f32>::from_fn(shape, |_| r.random_range(lo..hi) as f32);
    let mut centers = f(&[3, n], -0.6, 0.6);
    for (i, d) in depths.iter().enumerate() {
        centers.data_mut()[2 * n + i] = *d as f32;
    }
    let scales = f(&[3, n], 0.02, 0.4);
    let mut rotations = f(&[4, n], -1.0, 1.0);
    for i in 0..n {
        let norm: f32 = (0..4).map(|a| rotations.data()[a * n + i].powi(2)).sum::<f32>().sqrt();
        for a in 0..4 {
            rotations.data_mut()[a * n + i] /= norm;
        }
    }
    let opacities = f(&[1, n], 0.05, 0.99);
    let colors = f(&[3, n], 0.0, 1.0);
    GaussianSet { centers, scales, rotations, opacities, colors }
}

pub fn vars(g: &Graph<f64>, s: &GaussianSet) -> GaussianVars {
    GaussianVars {
        centers: g.constant(s.centers.cast()),
        scales: g.constant(s.scales.cast()),
        rotations: g.constant(s.rotations.cast()),
        opacities: g.constant(s.opacities.cast()),
        colors: g.constant(s.colors.cast()),
    }
}

/// Worst `|Σ w + T − 1|` over `sets` random sets, with and without early termination.
pub fn worst_conservation_error(sets: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..sets {
        let set = random_set(seed, 1 + (seed as usize * 7) % 40);
        let g = Graph::<f64>::new();
        let mut settings = RenderSettings::default();
        if seed % 2 == 1 {
            settings.min_transmittance = 0.0;
        }
        let out = render(&g, &vars(&g, &set), &camera(), H, W, &settings).unwrap();
        for (w, t) in out.weight_sum.data().iter().zip(out.transmittance.data()) {
            worst = worst.max((w + t - 1.0).abs());
        }
    }
    worst
}

/// Renders an empty set onto a coloured background; true when every pixel is exact.
pub fn empty_set_is_background() -> bool {
    let settings = RenderSettings { background: [0.25, 0.5, 1.0], ..RenderSettings::default() };
    let img = GaussianSet::empty().render(&camera(), H, W, &settings).unwrap();
    (0..3).all(|c| img.data()[c * H * W..(c + 1) * H * W].iter().all(|&v| v == settings.background[c] as f32))
}
