#![allow(dead_code)]

pub mod coder_cases;
pub mod fd_cases;
pub mod geometry_cases;
pub mod render_cases;

use codecsplat::tensors::gradcheck::{check_gradients, probe, GradCheck};
use codecsplat::tensors::{Graph, Tensor, Var};
use codecsplat::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const FD_STEP_COMPOSITE: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_INSTANCES: u64 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Run `build` on `FD_INSTANCES` seeded instances and return the worst relative error.
pub fn fd_suite<B>(name: &str, max_coords: usize, build: B) -> f64
where
    B: Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<dyn Fn(&Graph<f64>, &[Var]) -> Result<Var>>),
{
    fd_suite_with_step(name, max_coords, FD_STEP, build)
}

/// Composites with many leaky-ReLU kinks use a smaller step so that no
/// perturbation straddles one.
pub fn fd_suite_with_step<B>(name: &str, max_coords: usize, step: f64, build: B) -> f64
where
    B: Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<dyn Fn(&Graph<f64>, &[Var]) -> Result<Var>>),
{
    let mut worst = 0.0f64;
    for seed in 0..FD_INSTANCES {
        let mut r = rng(seed * 7919 + name.len() as u64);
        let (inputs, f) = build(&mut r);
        let report: GradCheck = check_gradients(&inputs, |g, v| f(g, v), step, max_coords).unwrap();
        worst = worst.max(report.worst());
    }
    worst
}

/// Scalarize a kernel output with fixed random weights.
pub fn probed(g: &Graph<f64>, out: Var) -> Result<Var> {
    probe(g, out, 99)
}
