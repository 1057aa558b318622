mod common;

use codecsplat::gaussians::{activate, render, RenderSettings, ATTR_CHANNELS};
use codecsplat::geometry::MetricDepth;
use codecsplat::tensors::{Graph, Tensor};
use common::render_cases::{camera, empty_set_is_background, random_set, vars, H, W};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn empty_set_renders_exact_background() {
    assert!(empty_set_is_background());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_plus_transmittance_is_one(seed in any::<u64>(), n in 1usize..40, early_stop in any::<bool>()) {
        let set = random_set(seed, n);
        let g = Graph::<f64>::new();
        let mut settings = RenderSettings::default();
        if !early_stop {
            settings.min_transmittance = 0.0;
        }
        let out = render(&g, &vars(&g, &set), &camera(), H, W, &settings).unwrap();
        for (w, t) in out.weight_sum.data().iter().zip(out.transmittance.data()) {
            prop_assert!((w + t - 1.0).abs() <= 1e-5, "w {w} + T {t}");
        }
    }

    #[test]
    fn render_ignores_input_order(seed in any::<u64>(), n in 2usize..30) {
        let set = random_set(seed, n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for i in (1..n).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let settings = RenderSettings::default();
        let a = set.render(&camera(), H, W, &settings).unwrap();
        let b = set.permuted(&order).render(&camera(), H, W, &settings).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn activated_rotations_are_unit_quaternions(seed in any::<u64>(), scale in 0.01f64..50.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::<f64>::new();
        let raw = g.constant(Tensor::from_fn(&[ATTR_CHANNELS, 3, 4], |_| r.random_range(-scale..scale)));
        let depth = MetricDepth(g.constant(Tensor::full(&[1, 3, 4], 3.0)));
        let attrs = activate(&g, raw, depth, &camera()).unwrap();
        let q = g.value(attrs.rotations);
        for i in 0..12 {
            let norm: f64 = (0..4).map(|a| q.data()[a * 12 + i].powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");
        }
        let s = g.value(attrs.scales);
        prop_assert!(s.data().iter().all(|&v| v > 0.0));
    }
}
