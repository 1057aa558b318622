//! Image quality metrics on `[3, H, W]` images with values in `[0, 1]`.

use crate::error::{Error, Result};
use crate::tensors::{Real, Tensor};

pub const PSNR_CAP: f64 = 99.0;

fn check<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check("mse", a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

/// `−10·log10(MSE)`, capped at [`PSNR_CAP`] for identical images.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m <= 0.0 { PSNR_CAP } else { (-10.0 * m.log10()).min(PSNR_CAP) })
}

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - half).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-region filtering of an `h × w` plane.
fn filter(x: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let wo = w - WINDOW + 1;
    let ho = h - WINDOW + 1;
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for xo in 0..wo {
            rows[y * wo + xo] = (0..WINDOW).map(|t| k[t] * x[y * w + xo + t]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for yo in 0..ho {
        for xo in 0..wo {
            out[yo * wo + xo] = (0..WINDOW).map(|t| k[t] * rows[(yo + t) * wo + xo]).sum();
        }
    }
    out
}

/// Mean SSIM over channels with an 11×11 Gaussian window (σ = 1.5), computed
/// over the valid region.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check("ssim", a, b)?;
    let (c, h, w) = a.dims3()?;
    if h < WINDOW || w < WINDOW {
        return Err(Error::shape("ssim", format!("image {h}×{w} smaller than the {WINDOW}×{WINDOW} window")));
    }
    let k = window();
    let plane = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        let x: Vec<f64> = a.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v.as_f64()).collect();
        let y: Vec<f64> = b.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v.as_f64()).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter(&x, h, w, &k), filter(&y, h, w, &k));
        let (sxx, syy, sxy) = (filter(&xx, h, w, &k), filter(&yy, h, w, &k), filter(&xy, h, w, &k));
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + C1) * (2.0 * cov + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / c as f64)
}
