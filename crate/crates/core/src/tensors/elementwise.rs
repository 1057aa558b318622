use std::sync::Arc;

use crate::error::{Error, Result};

use super::{Graph, Real, Tensor, Var};

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        let dim = a
            .shape()
            .iter()
            .zip(b.shape())
            .position(|(x, y)| x != y)
            .unwrap_or(a.shape().len().min(b.shape().len()));
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?} (dimension {dim})", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Leading channel count and trailing element count of a `[C, ...]` tensor.
fn channel_split<T: Real>(t: &Tensor<T>) -> (usize, usize) {
    let c = t.shape()[0];
    (c, t.len() / c.max(1))
}

impl<T: Real> Graph<T> {
    /// Elementwise map with derivative expressed through `(x, y)`.
    fn unary(
        &self,
        x: Var,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var {
        let xv = self.value(x);
        let out = Arc::new(xv.map(f));
        let yv = Arc::clone(&out);
        self.push_arc(out, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                for (((gx, &g), &x), &y) in gx.iter_mut().zip(g.data()).zip(xv.data()).zip(yv.data()) {
                    *gx += g * df(x, y);
                }
            }
        })
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("add", &av, &bv)?;
        let out = Tensor::new(
            av.shape(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect(),
        )?;
        Ok(self.push(out, &[a, b], move |g, sink| {
            sink.add(a, g.data());
            sink.add(b, g.data());
        }))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("sub", &av, &bv)?;
        let out = Tensor::new(
            av.shape(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| x - y).collect(),
        )?;
        Ok(self.push(out, &[a, b], move |g, sink| {
            sink.add(a, g.data());
            if let Some(gb) = sink.slot(b) {
                for (s, &x) in gb.iter_mut().zip(g.data()) {
                    *s -= x;
                }
            }
        }))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("mul", &av, &bv)?;
        let out = Tensor::new(
            av.shape(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect(),
        )?;
        Ok(self.push(out, &[a, b], move |g, sink| {
            if let Some(ga) = sink.slot(a) {
                for ((s, &g), &y) in ga.iter_mut().zip(g.data()).zip(bv.data()) {
                    *s += g * y;
                }
            }
            if let Some(gb) = sink.slot(b) {
                for ((s, &g), &x) in gb.iter_mut().zip(g.data()).zip(av.data()) {
                    *s += g * x;
                }
            }
        }))
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.unary(x, |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.unary(x, |v| v + c, |_, _| T::one())
    }

    pub fn leaky_relu(&self, x: Var, slope: f64) -> Var {
        let s = T::of(slope);
        self.unary(
            x,
            |v| if v > T::zero() { v } else { v * s },
            move |v, _| if v > T::zero() { T::one() } else { s },
        )
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn softplus(&self, x: Var) -> Var {
        self.unary(x, softplus, |v, _| sigmoid(v))
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), |_, y| y)
    }

    pub fn ln(&self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), |v, _| v.recip())
    }

    pub fn abs(&self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.abs(),
            |v, _| {
                if v > T::zero() {
                    T::one()
                } else if v < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn recip(&self, x: Var) -> Var {
        self.unary(x, |v| v.recip(), |_, y| -y * y)
    }

    pub fn square(&self, x: Var) -> Var {
        self.unary(x, |v| v * v, |v, _| v + v)
    }

    /// `max(x, floor)`; no gradient flows where the floor is active.
    pub fn clamp_min(&self, x: Var, floor: f64) -> Var {
        let m = T::of(floor);
        self.unary(
            x,
            move |v| if v < m { m } else { v },
            move |v, _| if v < m { T::zero() } else { T::one() },
        )
    }

    /// Multiply each leading-axis slice of `x` by the matching entry of `v`.
    pub fn mul_channel(&self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (self.value(x), self.value(v));
        let (c, inner) = channel_split(&xv);
        if vv.len() != c {
            return Err(Error::shape(
                "mul_channel",
                format!("dimension 0 of {:?} vs {} gains", xv.shape(), vv.len()),
            ));
        }
        let mut out = xv.as_ref().clone();
        for (chunk, &s) in out.data_mut().chunks_mut(inner).zip(vv.data()) {
            chunk.iter_mut().for_each(|e| *e *= s);
        }
        Ok(self.push(out, &[x, v], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                for ((gx, g), &s) in gx.chunks_mut(inner).zip(g.data().chunks(inner)).zip(vv.data()) {
                    for (a, &b) in gx.iter_mut().zip(g) {
                        *a += b * s;
                    }
                }
            }
            if let Some(gv) = sink.slot(v) {
                for ((gv, g), xs) in gv.iter_mut().zip(g.data().chunks(inner)).zip(xv.data().chunks(inner)) {
                    *gv += g.iter().zip(xs).map(|(&a, &b)| a * b).sum::<T>();
                }
            }
        }))
    }

    /// Add `v[c]` to every element of leading-axis slice `c`.
    pub fn add_channel(&self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (self.value(x), self.value(v));
        let (c, inner) = channel_split(&xv);
        if vv.len() != c {
            return Err(Error::shape(
                "add_channel",
                format!("dimension 0 of {:?} vs {} biases", xv.shape(), vv.len()),
            ));
        }
        let mut out = xv.as_ref().clone();
        for (chunk, &s) in out.data_mut().chunks_mut(inner).zip(vv.data()) {
            chunk.iter_mut().for_each(|e| *e += s);
        }
        Ok(self.push(out, &[x, v], move |g, sink| {
            sink.add(x, g.data());
            if let Some(gv) = sink.slot(v) {
                for (gv, g) in gv.iter_mut().zip(g.data().chunks(inner)) {
                    *gv += g.iter().copied().sum::<T>();
                }
            }
        }))
    }

    /// Broadcast a `[C]` vector to `[C, rest...]`.
    pub fn expand_channels(&self, v: Var, rest: &[usize]) -> Var {
        let vv = self.value(v);
        let inner: usize = rest.iter().product();
        let mut shape = vec![vv.len()];
        shape.extend_from_slice(rest);
        let data = vv
            .data()
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, inner))
            .collect();
        let out = Tensor::new(&shape, data).expect("expand shape");
        self.push(out, &[v], move |g, sink| {
            if let Some(gv) = sink.slot(v) {
                for (gv, g) in gv.iter_mut().zip(g.data().chunks(inner)) {
                    *gv += g.iter().copied().sum::<T>();
                }
            }
        })
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn softplus<T: Real>(v: T) -> T {
    // log(1 + e^v) = max(v, 0) + log(1 + e^-|v|)
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}
