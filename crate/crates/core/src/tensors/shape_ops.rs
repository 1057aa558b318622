use crate::error::{Error, Result};

use super::{Graph, Real, Tensor, Var};

/// `(outer, axis length, inner)` strides of `shape` around `axis`.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Graph<T> {
    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.as_ref().clone().reshaped(shape)?;
        Ok(self.push(out, &[x], move |g, sink| sink.add(x, g.data())))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&self, xs: &[Var], axis: usize) -> Result<Var> {
        let vals: Vec<_> = xs.iter().map(|&x| self.value(x)).collect();
        let first = vals
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {first:?}")));
        }
        for v in &vals {
            let s = v.shape();
            if s.len() != first.len() {
                return Err(Error::shape("concat", format!("rank {:?} vs {first:?}", s)));
            }
            if let Some(d) = (0..s.len()).find(|&d| d != axis && s[d] != first[d]) {
                return Err(Error::shape(
                    "concat",
                    format!("dimension {d} differs: {s:?} vs {first:?}"),
                ));
            }
        }
        let (outer, _, inner) = split(&first, axis);
        let lens: Vec<usize> = vals.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut shape = first.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &l) in vals.iter().zip(&lens) {
                data.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let out = Tensor::new(&shape, data)?;
        let xs = xs.to_vec();
        Ok(self.push(out, &xs.clone(), move |g, sink| {
            let g = g.data();
            let mut offset = 0;
            for (&x, &l) in xs.iter().zip(&lens) {
                if let Some(gx) = sink.slot(x) {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + l) * inner];
                        for (a, &b) in gx[o * l * inner..(o + 1) * l * inner].iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
                offset += l;
            }
        }))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) along dimension {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, n, inner) = split(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&xv.data()[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        let out = Tensor::new(&oshape, data)?;
        Ok(self.push(out, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                for o in 0..outer {
                    let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                    let dst = &mut gx[(o * n + start) * inner..(o * n + start + len) * inner];
                    for (a, &b) in dst.iter_mut().zip(src) {
                        *a += b;
                    }
                }
            }
        }))
    }

    pub fn sum(&self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.len();
        let out = Tensor::scalar(xv.sum());
        self.push(out, &[x], move |g, sink| {
            let gv = g.item();
            if let Some(gx) = sink.slot(x) {
                gx[..n].iter_mut().for_each(|v| *v += gv);
            }
        })
    }

    pub fn mean(&self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Reduce `axis` to length one by summation.
    pub fn sum_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("sum_axis", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split(&shape, axis);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut data[o * inner..(o + 1) * inner];
            for k in 0..n {
                let src = &xv.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (a, &b) in dst.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        let out = Tensor::new(&oshape, data)?;
        Ok(self.push(out, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for k in 0..n {
                        let dst = &mut gx[(o * n + k) * inner..(o * n + k + 1) * inner];
                        for (a, &b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
            }
        }))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split(&shape, axis);
        let mut data = xv.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| data[idx(k)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for k in 0..n {
                    let e = (data[idx(k)] - m).exp();
                    data[idx(k)] = e;
                    z += e;
                }
                for k in 0..n {
                    data[idx(k)] /= z;
                }
            }
        }
        let out = std::sync::Arc::new(Tensor::new(&shape, data)?);
        let y = std::sync::Arc::clone(&out);
        Ok(self.push_arc(out, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                let (g, y) = (g.data(), y.data());
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| (o * n + k) * inner + i;
                        let dot: T = (0..n).map(|k| g[idx(k)] * y[idx(k)]).sum();
                        for k in 0..n {
                            gx[idx(k)] += y[idx(k)] * (g[idx(k)] - dot);
                        }
                    }
                }
            }
        }))
    }
}
