use crate::error::{Error, Result};

use super::{Graph, Real, Tensor, Var};

/// Bilinear footprint of a fractional coordinate on an axis of length `n`:
/// `(i0, i1, frac)` with `i1 = i0 + 1` clipped to the last index.
#[inline]
fn footprint<T: Real>(c: T, n: usize) -> (usize, usize, T) {
    let i0 = (c.floor().to_usize().unwrap_or(0)).min(n.saturating_sub(2));
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - T::of(i0 as f64))
}

struct AxisTable<T> {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<T>,
}

/// Source coordinates `dst · n_in / n_out`, clamped to the last sample.
fn axis_table<T: Real>(n_in: usize, n_out: usize) -> AxisTable<T> {
    let scale = n_in as f64 / n_out as f64;
    let mut t = AxisTable {
        lo: Vec::with_capacity(n_out),
        hi: Vec::with_capacity(n_out),
        frac: Vec::with_capacity(n_out),
    };
    for d in 0..n_out {
        let s = (d as f64 * scale).min((n_in - 1) as f64);
        let (lo, hi, f) = footprint(T::of(s), n_in);
        t.lo.push(lo);
        t.hi.push(hi);
        t.frac.push(f);
    }
    t
}

impl<T: Real> Graph<T> {
    /// Sample `x: [C, H, W]` at pixel coordinates `coords: [2, Ho, Wo]` (u then v).
    ///
    /// Samples whose bilinear footprint leaves the image are zero and reported
    /// invalid in the returned `[1, Ho, Wo]` mask. Differentiable with respect to
    /// both the feature and the coordinates.
    pub fn grid_sample(&self, x: Var, coords: Var) -> Result<(Var, Tensor<T>)> {
        let (xv, cv) = (self.value(x), self.value(coords));
        let (c, h, w) = xv.dims3()?;
        let (two, ho, wo) = cv.dims3()?;
        if two != 2 {
            return Err(Error::shape("grid_sample", format!("dimension 0 of coords must be 2, got {two}")));
        }
        let p = ho * wo;
        let (wmax, hmax) = (T::of((w - 1) as f64), T::of((h - 1) as f64));
        let mut mask = vec![T::zero(); p];
        let mut out = vec![T::zero(); c * p];
        for i in 0..p {
            let (u, v) = (cv.data()[i], cv.data()[p + i]);
            if !(u >= T::zero() && u <= wmax && v >= T::zero() && v <= hmax) {
                continue;
            }
            mask[i] = T::one();
            let (x0, x1, fx) = footprint(u, w);
            let (y0, y1, fy) = footprint(v, h);
            let (w00, w01) = ((T::one() - fx) * (T::one() - fy), fx * (T::one() - fy));
            let (w10, w11) = ((T::one() - fx) * fy, fx * fy);
            for ch in 0..c {
                let pl = &xv.data()[ch * h * w..];
                out[ch * p + i] = w00 * pl[y0 * w + x0]
                    + w01 * pl[y0 * w + x1]
                    + w10 * pl[y1 * w + x0]
                    + w11 * pl[y1 * w + x1];
            }
        }
        let out = Tensor::new(&[c, ho, wo], out)?;
        let mask = Tensor::new(&[1, ho, wo], mask)?;
        let m = mask.clone();
        let var = self.push(out, &[x, coords], move |g, sink| {
            let g = g.data();
            let want_x = sink.wants(x);
            let mut gc = sink.wants(coords).then(|| vec![T::zero(); 2 * p]);
            let mut gx = want_x.then(|| vec![T::zero(); c * h * w]);
            for i in 0..p {
                if m.data()[i].is_zero() {
                    continue;
                }
                let (u, v) = (cv.data()[i], cv.data()[p + i]);
                let (x0, x1, fx) = footprint(u, w);
                let (y0, y1, fy) = footprint(v, h);
                let (mut gu, mut gv) = (T::zero(), T::zero());
                for ch in 0..c {
                    let go = g[ch * p + i];
                    if go.is_zero() {
                        continue;
                    }
                    let pl = &xv.data()[ch * h * w..];
                    let (a, b) = (pl[y0 * w + x0], pl[y0 * w + x1]);
                    let (cc, d) = (pl[y1 * w + x0], pl[y1 * w + x1]);
                    gu += go * ((b - a) * (T::one() - fy) + (d - cc) * fy);
                    gv += go * ((cc - a) * (T::one() - fx) + (d - b) * fx);
                    if let Some(gx) = gx.as_mut() {
                        let base = ch * h * w;
                        gx[base + y0 * w + x0] += go * (T::one() - fx) * (T::one() - fy);
                        gx[base + y0 * w + x1] += go * fx * (T::one() - fy);
                        gx[base + y1 * w + x0] += go * (T::one() - fx) * fy;
                        gx[base + y1 * w + x1] += go * fx * fy;
                    }
                }
                if let Some(gc) = gc.as_mut() {
                    gc[i] += gu;
                    gc[p + i] += gv;
                }
            }
            if let Some(gx) = gx {
                sink.add(x, &gx);
            }
            if let Some(gc) = gc {
                sink.add(coords, &gc);
            }
        });
        Ok((var, mask))
    }

    /// Bilinear resize of `x: [C, h, w]` to `[C, ho, wo]`; output pixel `d` reads
    /// source coordinate `d · h / ho`.
    pub fn resize_bilinear(&self, x: Var, ho: usize, wo: usize) -> Result<Var> {
        let xv = self.value(x);
        let (c, h, w) = xv.dims3()?;
        let ty = axis_table::<T>(h, ho);
        let tx = axis_table::<T>(w, wo);
        let mut out = vec![T::zero(); c * ho * wo];
        for ch in 0..c {
            let pl = &xv.data()[ch * h * w..(ch + 1) * h * w];
            for oy in 0..ho {
                let (y0, y1, fy) = (ty.lo[oy], ty.hi[oy], ty.frac[oy]);
                for ox in 0..wo {
                    let (x0, x1, fx) = (tx.lo[ox], tx.hi[ox], tx.frac[ox]);
                    let top = pl[y0 * w + x0] * (T::one() - fx) + pl[y0 * w + x1] * fx;
                    let bot = pl[y1 * w + x0] * (T::one() - fx) + pl[y1 * w + x1] * fx;
                    out[(ch * ho + oy) * wo + ox] = top * (T::one() - fy) + bot * fy;
                }
            }
        }
        let out = Tensor::new(&[c, ho, wo], out)?;
        Ok(self.push(out, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                for ch in 0..c {
                    let pl = &mut gx[ch * h * w..(ch + 1) * h * w];
                    for oy in 0..ho {
                        let (y0, y1, fy) = (ty.lo[oy], ty.hi[oy], ty.frac[oy]);
                        for ox in 0..wo {
                            let (x0, x1, fx) = (tx.lo[ox], tx.hi[ox], tx.frac[ox]);
                            let go = g.data()[(ch * ho + oy) * wo + ox];
                            pl[y0 * w + x0] += go * (T::one() - fx) * (T::one() - fy);
                            pl[y0 * w + x1] += go * fx * (T::one() - fy);
                            pl[y1 * w + x0] += go * (T::one() - fx) * fy;
                            pl[y1 * w + x1] += go * fx * fy;
                        }
                    }
                }
            }
        }))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, x: Var, factor: usize) -> Result<Var> {
        let xv = self.value(x);
        let (c, h, w) = xv.dims3()?;
        let (ho, wo) = (h * factor, w * factor);
        let out = Tensor::from_fn(&[c, ho, wo], |i| {
            let (ch, oy, ox) = (i / (ho * wo), (i / wo) % ho, i % wo);
            xv.data()[(ch * h + oy / factor) * w + ox / factor]
        });
        Ok(self.push(out, &[x], move |g, sink| {
            if let Some(gx) = sink.slot(x) {
                for (i, &go) in g.data().iter().enumerate() {
                    let (ch, oy, ox) = (i / (ho * wo), (i / wo) % ho, i % wo);
                    gx[(ch * h + oy / factor) * w + ox / factor] += go;
                }
            }
        }))
    }
}
