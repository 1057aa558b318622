//! Central finite-difference checks for every differentiable kernel,
//! composite op and loss. Each case panics on failure.

use codecsplat::codec::{Codec, CodecConfig, RatePoint};
use codecsplat::gaussians::{activate, map_2d_to_3d, render, DepthHead, GaussianVars, GsHead, RenderSettings, ATTR_CHANNELS};
use codecsplat::geometry::{
    backproject_depth, denormalize_depth, reproject, rotation_yaw_pitch, warp_to_reference, Camera, Intrinsics,
    MetricDepth, NormDepth,
};
use codecsplat::tensors::{Graph, ParamStore, Tensor, Var};
use codecsplat::training::{codec_objective, depth_loss, render_loss};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

type Case = (Vec<Tensor<f64>>, Box<dyn Fn(&Graph<f64>, &[Var]) -> codecsplat::Result<Var>>);

/// Values bounded away from zero so kinks are never straddled.
fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = r.random_range(0.05..1.0);
        if r.random_bool(0.5) { v } else { -v }
    })
}

fn assert_fd(name: &str, max_coords: usize, build: impl Fn(&mut ChaCha8Rng) -> Case) {
    let worst = fd_suite(name, max_coords, build);
    println!("{name}: worst relative error {worst:.3e}");
    assert!(worst < FD_TOLERANCE, "{name}: {worst:.3e}");
}

pub fn elementwise_kernels() {
    assert_fd("add_mul_sub", 64, |r| {
        let inputs = vec![random(&[3, 4], -1.0, 1.0, r), random(&[3, 4], -1.0, 1.0, r)];
        (inputs, Box::new(|g, v| {
            let s = g.add(v[0], v[1])?;
            let d = g.sub(v[0], v[1])?;
            let p = g.mul(s, d)?;
            probed(g, p)
        }))
    });
    assert_fd("activations", 64, |r| {
        let inputs = vec![away_from_zero(&[2, 3, 4], r)];
        (inputs, Box::new(|g, v| {
            let a = g.leaky_relu(v[0], 0.2);
            let b = g.sigmoid(v[0]);
            let c = g.softplus(v[0]);
            let e = g.exp(v[0]);
            let ab = g.abs(v[0]);
            let l = g.ln(g.add_scalar(ab, 0.5));
            let rc = g.recip(g.add_scalar(ab, 0.3));
            let sum = g.add(g.add(g.add(a, b)?, g.add(c, e)?)?, g.add(l, rc)?)?;
            probed(g, g.square(sum))
        }))
    });
    assert_fd("channel_broadcast", 64, |r| {
        let inputs = vec![random(&[3, 2, 5], -1.0, 1.0, r), random(&[3], 0.5, 2.0, r), random(&[3], -1.0, 1.0, r)];
        (inputs, Box::new(|g, v| {
            let m = g.mul_channel(v[0], v[1])?;
            let a = g.add_channel(m, v[2])?;
            let e = g.expand_channels(v[2], &[2, 5]);
            let out = g.mul(a, e)?;
            probed(g, out)
        }))
    });
}

pub fn linear_and_convolutions() {
    assert_fd("conv2d_stride1", 48, |r| {
        let inputs = vec![random(&[3, 6, 7], -1.0, 1.0, r), random(&[4, 3, 3, 3], -0.5, 0.5, r), random(&[4], -0.5, 0.5, r)];
        (inputs, Box::new(|g, v| probed(g, g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?)))
    });
    assert_fd("conv2d_stride2", 48, |r| {
        let inputs = vec![random(&[2, 8, 6], -1.0, 1.0, r), random(&[3, 2, 3, 3], -0.5, 0.5, r), random(&[3], -0.5, 0.5, r)];
        (inputs, Box::new(|g, v| probed(g, g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?)))
    });
    assert_fd("conv_transpose2d", 48, |r| {
        let inputs = vec![random(&[3, 3, 4], -1.0, 1.0, r), random(&[3, 2, 4, 4], -0.5, 0.5, r), random(&[2], -0.5, 0.5, r)];
        (inputs, Box::new(|g, v| probed(g, g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1)?)))
    });
    assert_fd("linear", 48, |r| {
        let inputs = vec![random(&[5, 3], -1.0, 1.0, r), random(&[4, 5], -0.5, 0.5, r), random(&[4], -0.5, 0.5, r)];
        (inputs, Box::new(|g, v| probed(g, g.linear(v[0], v[1], Some(v[2]))?)))
    });
}

pub fn shape_and_reduction_kernels() {
    assert_fd("softmax_axis0", 64, |r| {
        let inputs = vec![random(&[5, 3, 2], -2.0, 2.0, r)];
        (inputs, Box::new(|g, v| probed(g, g.softmax(v[0], 0)?)))
    });
    assert_fd("softmax_axis1", 64, |r| {
        let inputs = vec![random(&[2, 4, 3], -2.0, 2.0, r)];
        (inputs, Box::new(|g, v| probed(g, g.softmax(v[0], 1)?)))
    });
    assert_fd("concat_slice_reshape", 64, |r| {
        let inputs = vec![random(&[2, 3, 2], -1.0, 1.0, r), random(&[1, 3, 2], -1.0, 1.0, r)];
        (inputs, Box::new(|g, v| {
            let c = g.concat(&[v[0], v[1]], 0)?;
            let s = g.slice(c, 0, 1, 2)?;
            let s = g.reshape(s, &[3, 4])?;
            let sq = g.square(s);
            let summed = g.sum_axis(sq, 1)?;
            let m = g.reshape(g.mean(c), &[1, 1])?;
            let out = g.concat(&[summed, m], 0)?;
            probed(g, out)
        }))
    });
}

pub fn sampling_kernels() {
    assert_fd("grid_sample", 64, |r| {
        // Fractional parts kept away from 0 so no sample sits on a cell edge.
        let coords = Tensor::from_fn(&[2, 3, 4], |i| {
            let limit = if i < 12 { 6.0 } else { 4.0 };
            let base = r.random_range(0..(limit as usize)) as f64;
            (base + r.random_range(0.05..0.95)).min(limit - 0.05)
        });
        let inputs = vec![random(&[2, 5, 7], -1.0, 1.0, r), coords];
        (inputs, Box::new(|g, v| probed(g, g.grid_sample(v[0], v[1])?.0)))
    });
    assert_fd("resize_bilinear", 64, |r| {
        let inputs = vec![random(&[2, 3, 4], -1.0, 1.0, r)];
        (inputs, Box::new(|g, v| probed(g, g.resize_bilinear(v[0], 6, 8)?)))
    });
    assert_fd("upsample_nearest", 64, |r| {
        let inputs = vec![random(&[2, 3, 4], -1.0, 1.0, r)];
        (inputs, Box::new(|g, v| probed(g, g.upsample_nearest(v[0], 2)?)))
    });
}

pub fn rate_and_normalization_kernels() {
    assert_fd("gaussian_bits", 64, |r| {
        let inputs = vec![
            random(&[3, 5], -3.0, 3.0, r),
            random(&[3, 5], -1.0, 1.0, r),
            random(&[3, 5], 0.3, 3.0, r),
        ];
        (inputs, Box::new(|g, v| {
            let b = g.gaussian_bits(v[0], v[1], v[2], 1.0 / 65536.0)?;
            probed(g, b)
        }))
    });
    assert_fd("normalize_channels", 64, |r| {
        let inputs = vec![random(&[4, 2, 3], -1.0, 1.0, r)];
        (inputs, Box::new(|g, v| probed(g, g.normalize_channels(v[0]))))
    });
    assert_fd("clamp_min_above_floor", 64, |r| {
        let inputs = vec![random(&[3, 4], 0.2, 2.0, r)];
        (inputs, Box::new(|g, v| probed(g, g.clamp_min(v[0], 0.11))))
    });
}

fn cams(r: &mut ChaCha8Rng) -> (Camera, Camera) {
    let k = Intrinsics { fx: 14.0, fy: 14.0, cx: 5.5, cy: 3.5 };
    let a = Camera::from_center(k, rotation_yaw_pitch(r.random_range(-0.05..0.05), 0.0), [0.0; 3], 0.5, 20.0).unwrap();
    let b = Camera::from_center(
        k,
        rotation_yaw_pitch(r.random_range(-0.05..0.05), r.random_range(-0.03..0.03)),
        [r.random_range(0.05..0.2), r.random_range(-0.05..0.05), 0.0],
        0.5,
        20.0,
    )
    .unwrap();
    (a, b)
}

pub fn geometry_kernels() {
    assert_fd("reproject_depth", 64, |r| {
        let (a, b) = cams(r);
        let inputs = vec![random(&[1, 8, 12], 2.0, 6.0, r)];
        (inputs, Box::new(move |g, v| probed(g, reproject(g, MetricDepth(v[0]), &a, &b)?.0)))
    });
    assert_fd("warp_to_reference", 96, |r| {
        // Horizontal baseline with disparities chosen so every sample lands
        // mid-cell horizontally; the bilinear kink at integer coordinates is never crossed.
        let k = Intrinsics { fx: 14.0, fy: 14.0, cx: 5.5, cy: 3.5 };
        let a = Camera::from_center(k, rotation_yaw_pitch(0.0, 0.0), [0.0; 3], 0.5, 20.0).unwrap();
        let baseline = 0.3;
        // Source principal point offset by half a pixel so rows land mid-cell too.
        let ks = Intrinsics { cy: 3.0, ..k };
        let b = Camera::from_center(ks, rotation_yaw_pitch(0.0, 0.0), [baseline, 0.0, 0.0], 0.5, 20.0).unwrap();
        let depth = Tensor::from_fn(&[1, 8, 12], |_| {
            let shift = r.random_range(0..3) as f64 + r.random_range(0.2..0.8);
            14.0 * baseline / shift
        });
        let inputs = vec![random(&[2, 8, 12], -1.0, 1.0, r), depth];
        (inputs, Box::new(move |g, v| {
            let (w, mask) = warp_to_reference(g, v[0], MetricDepth(v[1]), &a, &b)?;
            let m = g.constant(Tensor::from_fn(&g.shape(w), |i| mask.data()[i % mask.len()]));
            probed(g, g.mul(w, m)?)
        }))
    });
    assert_fd("backproject_depth", 64, |r| {
        let (a, _) = cams(r);
        let inputs = vec![random(&[1, 4, 6], 1.0, 5.0, r)];
        (inputs, Box::new(move |g, v| probed(g, backproject_depth(g, MetricDepth(v[0]), &a)?)))
    });
}

pub fn round_st_passes_gradient_straight_through() {
    let g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(&[4], vec![-2.7, -0.2, 0.49, 70.0]).unwrap());
    let y = g.round_st(x, 64.0);
    assert_eq!(g.value(y).data(), &[-3.0, 0.0, 0.0, 64.0]);
    let w = g.constant(Tensor::new(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let grads = g.backward(g.sum(g.mul(y, w).unwrap())).unwrap();
    assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
}

fn assert_fd_composite(name: &str, max_coords: usize, build: impl Fn(&mut ChaCha8Rng) -> Case) {
    let worst = fd_suite_with_step(name, max_coords, FD_STEP_COMPOSITE, build);
    println!("{name}: worst relative error {worst:.3e}");
    assert!(worst < FD_TOLERANCE, "{name}: {worst:.3e}");
}

fn render_camera(r: &mut ChaCha8Rng) -> Camera {
    let k = Intrinsics { fx: 20.0, fy: 20.0, cx: 5.5, cy: 4.5 };
    Camera::from_center(
        k,
        rotation_yaw_pitch(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1)),
        [r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), 0.0],
        0.5,
        20.0,
    )
    .unwrap()
}

/// Splats with well separated depths, so the sort order never changes under
/// perturbation, and opacities below the α clamp.
fn splat_inputs(n: usize, r: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
    let centers = Tensor::from_fn(&[3, n], |i| {
        if i < 2 * n {
            r.random_range(-0.4..0.4)
        } else {
            2.0 + 0.5 * (i - 2 * n) as f64 + r.random_range(0.0..0.2)
        }
    });
    vec![
        centers,
        random(&[3, n], 0.08, 0.3, r),
        random(&[4, n], -1.0, 1.0, r),
        random(&[1, n], 0.2, 0.9, r),
        random(&[3, n], 0.0, 1.0, r),
    ]
}

fn fd_settings() -> RenderSettings {
    RenderSettings { background: [0.3, 0.1, 0.7], cull_sigma: 50.0, min_transmittance: 0.0, ..Default::default() }
}

pub fn splatting_kernels() {
    assert_fd("project_gaussians", 64, |r| {
        let cam = render_camera(r);
        let inputs = splat_inputs(5, r);
        (inputs[..3].to_vec(), Box::new(move |g, v| {
            let p = g.project_gaussians(v[0], v[1], v[2], &cam, 1e-6)?;
            probed(g, p.params)
        }))
    });
    assert_fd("render", 64, |r| {
        let cam = render_camera(r);
        let inputs = splat_inputs(6, r);
        (inputs, Box::new(move |g, v| {
            let rotations = g.normalize_channels(v[2]);
            let set = GaussianVars { centers: v[0], scales: v[1], rotations, opacities: v[3], colors: v[4] };
            let out = render(g, &set, &cam, 9, 12, &fd_settings())?;
            probed(g, out.image)
        }))
    });
}

pub fn gaussian_heads_and_mapping() {
    assert_fd("activate_and_map_2d_to_3d", 64, |r| {
        let (cam, _) = cams(r);
        let inputs = vec![away_from_zero(&[ATTR_CHANNELS, 3, 4], r), random(&[1, 3, 4], 1.0, 5.0, r)];
        (inputs, Box::new(move |g, v| {
            let depth = MetricDepth(v[1]);
            let attrs = activate(g, v[0], depth, &cam)?;
            let s = map_2d_to_3d(g, depth, &attrs, &cam)?;
            let all = g.concat(&[s.centers, s.scales, s.rotations, s.opacities, s.colors], 0)?;
            probed(g, all)
        }))
    });
    assert_fd_composite("depth_and_gs_heads", 48, |r| {
        let mut store = ParamStore::<f64>::new();
        let mut init = rng(r.random());
        let depth_head = DepthHead::new(&mut store, 4, &mut init).unwrap();
        let gs_head = GsHead::new(&mut store, 4, &mut init).unwrap();
        let (cam, _) = cams(r);
        let inputs = vec![random(&[4, 4, 6], -1.0, 1.0, r)];
        (inputs, Box::new(move |g, v| {
            let s = depth_head.forward(g, &store, v[0])?;
            let d = denormalize_depth(g, s, cam.near, cam.far);
            let attrs = gs_head.forward(g, &store, v[0], d, &cam)?;
            let all = g.concat(&[attrs.opacity, attrs.scales, attrs.rotations, attrs.colors, s.0], 0)?;
            probed(g, all)
        }))
    });
}

fn small_codec(r: &mut ChaCha8Rng) -> (Codec, ParamStore<f64>) {
    let mut store = ParamStore::<f64>::new();
    let cfg = CodecConfig { feature_channels: 4, latent_channels: 6, hyper_channels: 4, ..Default::default() };
    let codec = Codec::new(&mut store, cfg, &mut rng(r.random())).unwrap();
    (codec, store)
}

pub fn codec_transforms_and_rate() {
    assert_fd_composite("codec_analysis_synthesis", 48, |r| {
        let (codec, store) = small_codec(r);
        let rate = RatePoint::new(r.random_range(16.0..1024.0)).unwrap();
        let inputs = vec![random(&[4, 16, 16], -1.0, 1.0, r)];
        (inputs, Box::new(move |g, v| {
            let gain = codec.gain(g, &store, codec.embedding(g, &store, rate)?)?;
            let (y, z) = codec.analysis(g, &store, v[0], gain)?;
            let rec = codec.synthesis(g, &store, y, gain)?;
            let a = probed(g, rec)?;
            let b = probed(g, z)?;
            g.add(a, b)
        }))
    });
    assert_fd_composite("codec_rate", 48, |r| {
        let (codec, store) = small_codec(r);
        let rate = RatePoint::new(r.random_range(16.0..1024.0)).unwrap();
        // The hyper-latent reaches the main distribution as its own input;
        // rounding it is a straight-through step with no finite difference.
        let noise_y = random(&[6, 4, 4], -0.5, 0.5, r);
        let noise_z = random(&[4, 1, 1], -0.5, 0.5, r);
        let inputs = vec![random(&[4, 16, 16], -1.0, 1.0, r), random(&[4, 1, 1], -2.0, 2.0, r)];
        (inputs, Box::new(move |g, v| {
            let emb = codec.embedding(g, &store, rate)?;
            let gain = codec.gain(g, &store, emb)?;
            let (y, z) = codec.analysis(g, &store, v[0], gain)?;
            let (mu_z, sigma_z) = codec.hyper_prior(g, &store, emb, [1, 1])?;
            let zn = g.add(z, g.constant(noise_z.clone()))?;
            let bits_z = g.gaussian_bits(zn, mu_z, sigma_z, 1.0 / 65536.0)?;
            let (mu_y, sigma_y) = codec.main_distribution(g, &store, v[1], emb)?;
            let yn = g.add(y, g.constant(noise_y.clone()))?;
            let bits_y = g.gaussian_bits(yn, mu_y, sigma_y, 1.0 / 65536.0)?;
            g.add(g.sum(bits_z), g.sum(bits_y))
        }))
    });
}

pub fn losses() {
    assert_fd("render_loss", 64, |r| {
        (vec![random(&[3, 4, 5], 0.0, 1.0, r), random(&[3, 4, 5], 0.0, 1.0, r)], Box::new(|g, v| render_loss(g, v[0], v[1])))
    });
    assert_fd("depth_loss", 64, |r| {
        let reference = random(&[1, 5, 6], 0.0, 1.0, r);
        let offset = away_from_zero(&[1, 5, 6], r);
        let s = Tensor::from_fn(&[1, 5, 6], |i| reference.data()[i] + 0.2 * offset.data()[i]);
        (vec![s, reference], Box::new(|g, v| depth_loss(g, NormDepth(v[0]), NormDepth(v[1]))))
    });
    assert_fd("codec_objective", 8, |r| {
        let lambda = r.random_range(16.0..1024.0);
        let (gamma, beta) = (r.random_range(0.0..1.0), r.random_range(0.0..1e-2));
        let inputs = vec![random(&[], 0.0, 1.0, r), random(&[], 0.0, 1.0, r), random(&[], 0.0, 5.0, r)];
        (
            inputs,
            Box::new(move |g, v| codec_objective(g, RatePoint::new(lambda)?, v[0], v[1], v[2], gamma, beta)),
        )
    });
    assert_fd_composite("render_then_mse", 24, |r| {
        let mut inputs = splat_inputs(3, r);
        let cam = render_camera(r);
        inputs.push(random(&[3, 9, 12], 0.0, 1.0, r));
        (
            inputs,
            Box::new(move |g, v| {
                let rotations = g.normalize_channels(v[2]);
                let set = GaussianVars { centers: v[0], scales: v[1], rotations, opacities: v[3], colors: v[4] };
                let out = render(g, &set, &cam, 9, 12, &fd_settings())?;
                render_loss(g, out.image, v[5])
            }),
        )
    });
}

/// Every case, in a fixed order.
pub const ALL: &[(&str, fn())] = &[
    ("elementwise_kernels", elementwise_kernels),
    ("linear_and_convolutions", linear_and_convolutions),
    ("shape_and_reduction_kernels", shape_and_reduction_kernels),
    ("sampling_kernels", sampling_kernels),
    ("rate_and_normalization_kernels", rate_and_normalization_kernels),
    ("geometry_kernels", geometry_kernels),
    ("round_st_passes_gradient_straight_through", round_st_passes_gradient_straight_through),
    ("splatting_kernels", splatting_kernels),
    ("gaussian_heads_and_mapping", gaussian_heads_and_mapping),
    ("codec_transforms_and_rate", codec_transforms_and_rate),
    ("losses", losses),
];
