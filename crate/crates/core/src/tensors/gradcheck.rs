//! Central finite-difference gradient checking at `f64`.
//!
//! The numeric side only ever evaluates forward passes on fresh graphs, so it
//! shares nothing with the backward closures it is checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{Graph, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Per input: `max |analytic - numeric| / max(max |numeric|, max |analytic|)`.
    pub relative_errors: Vec<f64>,
    pub coordinates_checked: usize,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Reduce any output to a scalar with fixed pseudo-random weights, so every
/// output element contributes to the checked gradient.
pub fn probe(g: &Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0)));
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

/// Compare the tape gradient of `f` against central differences with `step`.
///
/// At most `max_coords` coordinates per input are perturbed (chosen with a
/// seeded generator); the analytic gradient is compared on those coordinates.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], f: F, step: f64, max_coords: usize) -> Result<GradCheck>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&g, &vars)?;
    let grads = g.backward(loss)?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone())).collect();
        let l = f(&g, &vars)?;
        Ok(g.value(l).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut checked = 0;
    for (k, input) in inputs.iter().enumerate() {
        let n = input.len();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            (0..max_coords).map(|_| rng.random_range(0..n)).collect()
        };
        let analytic = grads.wrt(vars[k]);
        let (mut max_diff, mut scale) = (0.0f64, 0.0f64);
        for &i in &coords {
            let mut work: Vec<Tensor<f64>> = inputs.to_vec();
            work[k].data_mut()[i] = input.data()[i] + step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = input.data()[i] - step;
            let minus = eval(&work)?;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.map_or(0.0, |t| t.data()[i]);
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(numeric.abs()).max(a.abs());
            checked += 1;
        }
        relative_errors.push(if scale > 1e-12 { max_diff / scale } else { max_diff });
    }
    Ok(GradCheck {
        relative_errors,
        coordinates_checked: checked,
    })
}
