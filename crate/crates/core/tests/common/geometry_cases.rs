use codecsplat::geometry::{
    backproject_depth, denormalize, denormalize_depth, normalize, normalize_inverse_depth, rotation_yaw_pitch,
    warp_to_reference, Camera, Intrinsics, MetricDepth, NormDepth,
};
use codecsplat::tensors::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// World point → camera pixel and depth, written out from `K [R | t]`.
pub fn project(cam: &Camera, p: [f64; 3]) -> (f64, f64, f64) {
    let r = cam.rotation;
    let t = cam.translation;
    let q: Vec<f64> = (0..3).map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i]).collect();
    let k = cam.intrinsics;
    (k.fx * q[0] / q[2] + k.cx, k.fy * q[1] / q[2] + k.cy, q[2])
}

/// `Rᵀ (d K⁻¹ [u, v, 1] − t)`.
pub fn lift(cam: &Camera, u: f64, v: f64, d: f64) -> [f64; 3] {
    let k = cam.intrinsics;
    let x = [(u - k.cx) / k.fx * d - cam.translation[0], (v - k.cy) / k.fy * d - cam.translation[1], d - cam.translation[2]];
    let r = cam.rotation;
    [0, 1, 2].map(|j| r[0][j] * x[0] + r[1][j] * x[1] + r[2][j] * x[2])
}

fn random_camera(r: &mut ChaCha8Rng, h: usize, w: usize) -> Camera {
    let f = r.random_range(30.0..90.0);
    let k = Intrinsics { fx: f, fy: f * r.random_range(0.9..1.1), cx: (w as f64 - 1.0) / 2.0, cy: (h as f64 - 1.0) / 2.0 };
    let rot = rotation_yaw_pitch(r.random_range(-0.5..0.5), r.random_range(-0.3..0.3));
    let c = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    Camera::from_center(k, rot, c, 0.5, 30.0).unwrap()
}

/// Worst coordinate error of `backproject_depth` against [`lift`], and of the
/// reprojection of the lifted point back onto its pixel.
pub fn backprojection_error(trials: u64) -> (f64, f64) {
    let (h, w) = (24, 32);
    let (mut centers, mut reproj) = (0.0f64, 0.0f64);
    for seed in 0..trials {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let cam = random_camera(&mut r, h, w);
        let depth = Tensor::<f64>::from_fn(&[1, h, w], |_| r.random_range(0.6..25.0));
        let g = Graph::<f64>::new();
        let pts = g.value(backproject_depth(&g, MetricDepth(g.constant(depth.clone())), &cam).unwrap());
        let p = h * w;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let want = lift(&cam, x as f64, y as f64, depth.data()[i]);
                for a in 0..3 {
                    centers = centers.max((pts.data()[a * p + i] - want[a]).abs());
                }
                let (u, v, z) = project(&cam, want);
                reproj = reproj.max((u - x as f64).abs()).max((v - y as f64).abs()).max((z - depth.data()[i]).abs());
            }
        }
    }
    (centers, reproj)
}

/// Worst difference between a feature and its warp onto itself through
/// coincident cameras, over interior pixels.
pub fn warp_identity_error(trials: u64) -> f64 {
    let (c, h, w) = (3, 16, 24);
    let mut worst = 0.0f64;
    for seed in 0..trials {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let cam = random_camera(&mut r, h, w);
        let f = Tensor::<f64>::from_fn(&[c, h, w], |_| r.random_range(-1.0..1.0));
        let depth = Tensor::<f64>::from_fn(&[1, h, w], |_| r.random_range(0.6..25.0));
        let g = Graph::<f64>::new();
        let (warped, mask) = warp_to_reference(&g, g.constant(f.clone()), MetricDepth(g.constant(depth)), &cam, &cam).unwrap();
        let wv = g.value(warped);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                assert_eq!(mask.data()[y * w + x], 1.0, "interior pixel ({x}, {y}) masked out");
                for ch in 0..c {
                    let i = (ch * h + y) * w + x;
                    worst = worst.max((wv.data()[i] - f.data()[i]).abs());
                }
            }
        }
    }
    worst
}

/// Worst round-trip error of the metric ↔ normalized inverse depth pair, in
/// scalar and graph form. Metric errors are relative to depth.
pub fn depth_inverse_error() -> f64 {
    let mut worst = 0.0f64;
    let mut r = ChaCha8Rng::seed_from_u64(7);
    for (n, f) in [(1.0, 100.0), (0.5, 12.0), (2.0, 2.5), (0.1, 1000.0)] {
        let s = Tensor::<f64>::from_fn(&[1, 8, 8], |_| r.random_range(0.0..=1.0));
        let d = Tensor::<f64>::from_fn(&[1, 8, 8], |_| r.random_range(n..=f));
        for (&si, &di) in s.data().iter().zip(d.data()) {
            worst = worst.max((normalize(denormalize(si, n, f), n, f) - si).abs());
            worst = worst.max((denormalize(normalize(di, n, f), n, f) - di).abs() / di);
        }
        let g = Graph::<f64>::new();
        let sv = g.constant(s.clone());
        let back = normalize_inverse_depth(&g, denormalize_depth(&g, NormDepth(sv), n, f), n, f);
        worst = worst.max(g.value(back.0).max_abs_diff(&s));
        let dv = g.constant(d.clone());
        let again = g.value(denormalize_depth(&g, normalize_inverse_depth(&g, MetricDepth(dv), n, f), n, f).0);
        for (&a, &b) in again.data().iter().zip(d.data()) {
            worst = worst.max((a - b).abs() / b);
        }
    }
    worst
}
