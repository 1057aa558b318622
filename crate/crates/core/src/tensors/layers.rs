//! Convolution and linear layers whose weights live in a [`ParamStore`].

use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{fan_in_uniform, Graph, ParamGroup, ParamId, ParamStore, Real, Tensor, Var};

/// `k×k` convolution with bias.
#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Registers `{name}.weight` `[co, ci, k, k]` and `{name}.bias` `[co]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        (ci, co, k): (usize, usize, usize),
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = store.register(format!("{name}.weight"), fan_in_uniform(&[co, ci, k, k], ci * k * k, rng), group)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[co]), group)?;
        Ok(Self { weight, bias, stride, pad: k / 2 })
    }

    pub fn forward<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.weight), g.param(store, self.bias));
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }

    pub fn out_channels<T: Real>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.weight).shape()[0]
    }
}

/// Stride-2 transposed convolution (`k = 4`, `pad = 1`), doubling both sides.
#[derive(Clone, Copy, Debug)]
pub struct Upconv {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Upconv {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        (ci, co): (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        // Each output pixel receives ci·(k/stride)² = 4·ci taps.
        let weight = store.register(format!("{name}.weight"), fan_in_uniform(&[ci, co, 4, 4], 4 * ci, rng), group)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[co]), group)?;
        Ok(Self { weight, bias })
    }

    pub fn forward<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.weight), g.param(store, self.bias));
        g.conv_transpose2d(x, w, Some(b), 2, 1)
    }
}

/// Affine map over the leading axis.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        (input, output): (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = store.register(format!("{name}.weight"), fan_in_uniform(&[output, input], input, rng), group)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[output]), group)?;
        Ok(Self { weight, bias })
    }

    pub fn forward<T: Real>(&self, g: &Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.weight), g.param(store, self.bias));
        g.linear(x, w, Some(b))
    }
}

/// Multiply every value of a stored parameter by `s` (used to start residual
/// branches near zero).
pub fn scale_param<T: Real>(store: &mut ParamStore<T>, id: ParamId, s: f64) {
    let t = store.value(id).map(|v| v * T::of(s));
    store.set_value(id, t).expect("same shape");
}

pub const LEAKY_SLOPE: f64 = 0.2;
