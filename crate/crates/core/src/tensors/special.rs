use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use crate::error::{Error, Result};

use super::{Graph, Real, Tensor, Var};

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Mass of the unit interval centred on `x` under `N(mu, sigma²)`.
///
/// Evaluated on the lower tail (`|x - mu|`) so both CDF terms stay away from 1.
#[inline]
pub fn interval_mass(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = (x - mu).abs();
    normal_cdf((0.5 - d) / sigma) - normal_cdf((-0.5 - d) / sigma)
}

impl<T: Real> Graph<T> {
    /// Round half away from zero and clamp to `[-bound, bound]`; the backward
    /// pass is the identity (straight-through).
    pub fn round_st(&self, x: Var, bound: f64) -> Var {
        let xv = self.value(x);
        let b = T::of(bound);
        let out = xv.map(|v| v.round().max(-b).min(b));
        self.push(out, &[x], move |g, sink| sink.add(x, g.data()))
    }

    /// Elementwise `-log2 max(p_min, P(x))`, where `P(x)` is the mass of
    /// `[x - 1/2, x + 1/2]` under `N(mu, sigma²)`.
    pub fn gaussian_bits(&self, x: Var, mu: Var, sigma: Var, p_min: f64) -> Result<Var> {
        let (xv, mv, sv) = (self.value(x), self.value(mu), self.value(sigma));
        if xv.shape() != mv.shape() || xv.shape() != sv.shape() {
            return Err(Error::shape(
                "gaussian_bits",
                format!("{:?}, {:?}, {:?}", xv.shape(), mv.shape(), sv.shape()),
            ));
        }
        let n = xv.len();
        let mut bits = Vec::with_capacity(n);
        for i in 0..n {
            let p = interval_mass(xv.data()[i].as_f64(), mv.data()[i].as_f64(), sv.data()[i].as_f64());
            bits.push(T::of(-p.max(p_min).log2()));
        }
        let out = Tensor::new(xv.shape(), bits)?;
        Ok(self.push(out, &[x, mu, sigma], move |g, sink| {
            let mut gx = vec![T::zero(); n];
            let mut gs = vec![T::zero(); n];
            for i in 0..n {
                let go = g.data()[i].as_f64();
                if go == 0.0 {
                    continue;
                }
                let (xi, mi, si) = (xv.data()[i].as_f64(), mv.data()[i].as_f64(), sv.data()[i].as_f64());
                let p = interval_mass(xi, mi, si);
                if p < p_min {
                    continue;
                }
                let a = (xi + 0.5 - mi) / si;
                let b = (xi - 0.5 - mi) / si;
                let (pa, pb) = (normal_pdf(a), normal_pdf(b));
                let dbits_dp = -1.0 / (p * LN_2);
                let dp_dx = (pa - pb) / si;
                let dp_ds = (-a * pa + b * pb) / si;
                gx[i] = T::of(go * dbits_dp * dp_dx);
                gs[i] = T::of(go * dbits_dp * dp_ds);
            }
            sink.add(x, &gx);
            if let Some(gm) = sink.slot(mu) {
                for (a, &b) in gm.iter_mut().zip(&gx) {
                    *a -= b;
                }
            }
            sink.add(sigma, &gs);
        }))
    }

    /// Normalize each vector along the leading axis to unit length.
    pub fn normalize_channels(&self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.shape()[0];
        let inner = xv.len() / c;
        let mut norms = vec![T::zero(); inner];
        for k in 0..c {
            for (n, &v) in norms.iter_mut().zip(&xv.data()[k * inner..(k + 1) * inner]) {
                *n += v * v;
            }
        }
        let tiny = T::of(1e-12);
        norms.iter_mut().for_each(|n| *n = n.sqrt().max(tiny));
        let mut out = xv.as_ref().clone();
        for k in 0..c {
            for (v, &n) in out.data_mut()[k * inner..(k + 1) * inner].iter_mut().zip(&norms) {
                *v /= n;
            }
        }
        let y = std::sync::Arc::new(out);
        let yv = std::sync::Arc::clone(&y);
        self.push_arc(y, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                let (g, y) = (g.data(), yv.data());
                for i in 0..inner {
                    let dot: T = (0..c).map(|k| g[k * inner + i] * y[k * inner + i]).sum();
                    for k in 0..c {
                        let j = k * inner + i;
                        gx[j] += (g[j] - y[j] * dot) / norms[i];
                    }
                }
            }
        })
    }
}
