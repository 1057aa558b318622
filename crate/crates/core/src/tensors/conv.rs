use crate::error::{Error, Result};

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn out_len(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

/// Unfold image patches into a `[C·k·k, Ho·Wo]` matrix.
fn im2col<T: Real>(img: &[T], g: Geom) -> Vec<T> {
    let p = g.cols();
    let mut col = vec![T::zero(); g.rows() * p];
    for ci in 0..g.c {
        let plane = &img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        // ix = ox + kx - pad
                        let lo = g.pad.saturating_sub(kx);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.wo);
                        if lo < hi {
                            let s0 = lo + kx - g.pad;
                            drow[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the image.
fn col2im<T: Real>(col: &[T], g: Geom, img: &mut [T]) {
    let p = g.cols();
    for ci in 0..g.c {
        let plane = &mut img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let srcrow = &col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let s = &srcrow[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, &v) in s.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], inner: usize) {
    for (chunk, &b) in out.chunks_mut(inner).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Real>(g: &[T], inner: usize, gb: &mut [T]) {
    for (gb, chunk) in gb.iter_mut().zip(g.chunks(inner)) {
        *gb += chunk.iter().copied().sum::<T>();
    }
}

impl<T: Real> Graph<T> {
    /// 2D convolution of `x: [Ci, H, W]` with `w: [Co, Ci, k, k]` and optional `b: [Co]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (ci, h, wd) = xv.dims3()?;
        let [co, wci, k, k2] = wv.shape()[..] else {
            return Err(Error::shape("conv2d", format!("weight must be rank 4, got {:?}", wv.shape())));
        };
        if wci != ci || k != k2 {
            return Err(Error::shape(
                "conv2d",
                format!("input channels (dimension 0) {ci} vs weight {:?}", wv.shape()),
            ));
        }
        let (Some(ho), Some(wo)) = (out_len(h, k, stride, pad), out_len(wd, k, stride, pad)) else {
            return Err(Error::shape("conv2d", format!("kernel {k} larger than padded input {h}x{wd}")));
        };
        let bv = b.map(|b| self.value(b));
        if let Some(bv) = &bv {
            if bv.len() != co {
                return Err(Error::shape("conv2d", format!("bias length {} vs {co} output channels", bv.len())));
            }
        }
        let geom = Geom { c: ci, h, w: wd, k, stride, pad, ho, wo };
        let (rows, p) = (geom.rows(), geom.cols());
        let col = im2col(xv.data(), geom);
        let mut out = vec![T::zero(); co * p];
        gemm_nn(co, rows, p, wv.data(), &col, &mut out);
        drop(col);
        if let Some(bv) = &bv {
            add_bias(&mut out, bv.data(), p);
        }
        let out = Tensor::new(&[co, ho, wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, &inputs, move |g, sink| {
            let g = g.data();
            if let Some(b) = b {
                if let Some(gb) = sink.slot(b) {
                    bias_grad(g, p, gb);
                }
            }
            if sink.wants(w) {
                let col = im2col(xv.data(), geom);
                let gw = sink.slot(w).unwrap();
                gemm_nt(co, rows, p, g, &col, gw);
            }
            if sink.wants(x) {
                let mut gcol = vec![T::zero(); rows * p];
                gemm_tn(rows, co, p, wv.data(), g, &mut gcol);
                col2im(&gcol, geom, sink.slot(x).unwrap());
            }
        }))
    }

    /// Transposed convolution of `x: [Ci, H, W]` with `w: [Ci, Co, k, k]`;
    /// output side is `(H - 1)·stride - 2·pad + k`.
    pub fn conv_transpose2d(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (ci, h, wd) = xv.dims3()?;
        let [wci, co, k, k2] = wv.shape()[..] else {
            return Err(Error::shape("conv_transpose2d", format!("weight must be rank 4, got {:?}", wv.shape())));
        };
        if wci != ci || k != k2 {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input channels (dimension 0) {ci} vs weight {:?}", wv.shape()),
            ));
        }
        let ho = ((h - 1) * stride + k)
            .checked_sub(2 * pad)
            .ok_or_else(|| Error::shape("conv_transpose2d", "padding exceeds output"))?;
        let wo = ((wd - 1) * stride + k)
            .checked_sub(2 * pad)
            .ok_or_else(|| Error::shape("conv_transpose2d", "padding exceeds output"))?;
        let bv = b.map(|b| self.value(b));
        if let Some(bv) = &bv {
            if bv.len() != co {
                return Err(Error::shape("conv_transpose2d", format!("bias length {} vs {co}", bv.len())));
            }
        }
        // Geometry of the adjoint convolution: output image -> input grid.
        let geom = Geom { c: co, h: ho, w: wo, k, stride, pad, ho: h, wo: wd };
        let (rows, p) = (geom.rows(), geom.cols());
        let mut cols = vec![T::zero(); rows * p];
        gemm_tn(rows, ci, p, wv.data(), xv.data(), &mut cols);
        let mut out = vec![T::zero(); co * ho * wo];
        col2im(&cols, geom, &mut out);
        drop(cols);
        if let Some(bv) = &bv {
            add_bias(&mut out, bv.data(), ho * wo);
        }
        let out = Tensor::new(&[co, ho, wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, &inputs, move |g, sink| {
            let g = g.data();
            if let Some(b) = b {
                if let Some(gb) = sink.slot(b) {
                    bias_grad(g, ho * wo, gb);
                }
            }
            if !sink.wants(x) && !sink.wants(w) {
                return;
            }
            let gcols = im2col(g, geom);
            if let Some(gx) = sink.slot(x) {
                gemm_nn(ci, rows, p, wv.data(), &gcols, gx);
            }
            if let Some(gw) = sink.slot(w) {
                gemm_nt(ci, rows, p, xv.data(), &gcols, gw);
            }
        }))
    }

    /// Affine map over the leading axis: `w: [Out, In]` applied to `x: [In, ...]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let [out_dim, in_dim] = wv.shape()[..] else {
            return Err(Error::shape("linear", format!("weight must be rank 2, got {:?}", wv.shape())));
        };
        if xv.shape()[0] != in_dim {
            return Err(Error::shape(
                "linear",
                format!("dimension 0 of input {:?} vs weight {:?}", xv.shape(), wv.shape()),
            ));
        }
        let p = xv.len() / in_dim;
        let bv = b.map(|b| self.value(b));
        let mut out = vec![T::zero(); out_dim * p];
        gemm_nn(out_dim, in_dim, p, wv.data(), xv.data(), &mut out);
        if let Some(bv) = &bv {
            if bv.len() != out_dim {
                return Err(Error::shape("linear", format!("bias length {} vs {out_dim}", bv.len())));
            }
            add_bias(&mut out, bv.data(), p);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = out_dim;
        let out = Tensor::new(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, &inputs, move |g, sink| {
            let g = g.data();
            if let Some(b) = b {
                if let Some(gb) = sink.slot(b) {
                    bias_grad(g, p, gb);
                }
            }
            if let Some(gw) = sink.slot(w) {
                gemm_nt(out_dim, in_dim, p, g, xv.data(), gw);
            }
            if let Some(gx) = sink.slot(x) {
                gemm_tn(in_dim, out_dim, p, wv.data(), g, gx);
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sum over the kernel footprint.
    fn direct_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (ci, h, wd) = x.dims3().unwrap();
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        Tensor::from_fn(&[co, ho, wo], |i| {
            let (o, oy, ox) = (i / (ho * wo), (i / wo) % ho, i % wo);
            let mut acc = 0.0;
            for c in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += x.data()[(c * h + iy as usize) * wd + ix as usize]
                                * w.data()[((o * ci + c) * k + ky) * k + kx];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn delta_image_reproduces_kernel() {
        let g = Graph::<f64>::new();
        let mut img = Tensor::zeros(&[1, 7, 7]);
        img.data_mut()[3 * 7 + 3] = 1.0;
        let k = Tensor::new(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let x = g.constant(img);
        let w = g.constant(k.clone());
        let y = g.value(g.conv2d(x, w, None, 1, 1).unwrap());
        // correlation: out(3+dy, 3+dx) = k(1-dy, 1-dx)
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let v = y.data()[((3 + dy) * 7 + 3 + dx) as usize];
                let kv = k.data()[((1 - dy) * 3 + (1 - dx)) as usize];
                assert_eq!(v, kv);
            }
        }
        assert_eq!(y.sum(), 45.0);
    }

    #[test]
    fn strided_conv_matches_direct_sum() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_fn(&[3, 9, 10], |i| ((i * 7919) % 17) as f64 / 17.0 - 0.5);
        let w = Tensor::from_fn(&[4, 3, 3, 3], |i| ((i * 104729) % 13) as f64 / 13.0 - 0.5);
        for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
            let y = g.conv2d(g.constant(x.clone()), g.constant(w.clone()), None, stride, pad).unwrap();
            let want = direct_conv(&x, &w, stride, pad);
            assert_eq!(g.shape(y), want.shape());
            assert!(g.value(y).max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn transposed_conv_doubles_resolution() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[2, 3, 5], 1.0));
        let w = g.constant(Tensor::full(&[2, 4, 4, 4], 0.25));
        let y = g.conv_transpose2d(x, w, None, 2, 1).unwrap();
        assert_eq!(g.shape(y), vec![4, 6, 10]);
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 4, 4]));
        let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
        let err = g.conv2d(x, w, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("dimension 0"), "{err}");
    }
}
