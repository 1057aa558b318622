//! Differentiable EWA splatting: a projection kernel and a rasterizer.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Camera, Mat3};
use crate::tensors::{Graph, Real, Tensor, Var};

use super::dual::{Dual, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub background: [f64; 3],
    /// Splats are evaluated within this many standard deviations of their centre.
    pub cull_sigma: f64,
    /// A pixel stops accepting splats once its transmittance falls below this.
    pub min_transmittance: f64,
    /// Added to the diagonal of every screen-space covariance.
    pub cov_epsilon: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            cull_sigma: 3.0,
            min_transmittance: 1e-4,
            cov_epsilon: 1e-6,
        }
    }
}

pub const MAX_ALPHA: f64 = 0.999;

/// Screen-space splats: `params` is `[5, P]` holding `(u, v, a, b, c)`, where
/// `(a, b, c)` is the inverse 2D covariance `[[a, b], [b, c]]`.
pub struct ProjectedGaussians {
    pub params: Var,
    pub depth: Vec<f64>,
    pub visible: Vec<bool>,
}

fn quat_rotation<S: Scalar>(q: [S; 4]) -> [[S; 3]; 3] {
    let [w, x, y, z] = q;
    let one = S::c(1.0);
    let two = S::c(2.0);
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn rotation_from_quaternion(q: [f64; 4]) -> Mat3 {
    quat_rotation(q)
}

/// `(u, v, a, b, c)` and camera depth of one Gaussian, or `None` behind the camera.
fn project_one<S: Scalar>(p: [S; 3], s: [S; 3], q: [S; 4], cam: &Camera, eps: f64) -> Option<([S; 5], f64)> {
    let w = cam.rotation.map(|r| r.map(S::c));
    let t = cam.translation;
    let mut pc = [S::c(0.0); 3];
    for i in 0..3 {
        pc[i] = w[i][0] * p[0] + w[i][1] * p[1] + w[i][2] * p[2] + S::c(t[i]);
    }
    let z = pc[2];
    if z.val() <= cam.min_depth() {
        return None;
    }
    let rq = quat_rotation(q);
    // M = W·R(q)·diag(s); the camera-space covariance is M·Mᵀ.
    let mut m = [[S::c(0.0); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            let wr = w[i][0] * rq[0][k] + w[i][1] * rq[1][k] + w[i][2] * rq[2][k];
            m[i][k] = wr * s[k];
        }
    }
    let k = cam.intrinsics;
    let (fx, fy) = (S::c(k.fx), S::c(k.fy));
    let zi = S::c(1.0) / z;
    let j = [
        [fx * zi, S::c(0.0), -fx * pc[0] * zi * zi],
        [S::c(0.0), fy * zi, -fy * pc[1] * zi * zi],
    ];
    // J·M is 2×3; cov = (J·M)(J·M)ᵀ.
    let mut jm = [[S::c(0.0); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jm[r][c] = j[r][0] * m[0][c] + j[r][1] * m[1][c] + j[r][2] * m[2][c];
        }
    }
    let dot = |a: [S; 3], b: [S; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let ca = dot(jm[0], jm[0]) + S::c(eps);
    let cb = dot(jm[0], jm[1]);
    let cc = dot(jm[1], jm[1]) + S::c(eps);
    let det = ca * cc - cb * cb;
    let u = fx * pc[0] * zi + S::c(k.cx);
    let v = fy * pc[1] * zi + S::c(k.cy);
    Some(([u, v, cc / det, -cb / det, ca / det], z.val()))
}

fn column<T: Real, const N: usize>(t: &Tensor<T>, i: usize, p: usize) -> [f64; N] {
    std::array::from_fn(|r| t.data()[r * p + i].as_f64())
}

impl<T: Real> Graph<T> {
    /// Project Gaussians `centers [3, P]`, `scales [3, P]`, `rotations [4, P]`
    /// (unit quaternions) into `camera`. Gaussians behind the camera are marked
    /// invisible and receive no gradient.
    pub fn project_gaussians(
        &self,
        centers: Var,
        scales: Var,
        rotations: Var,
        camera: &Camera,
        cov_epsilon: f64,
    ) -> Result<ProjectedGaussians> {
        let (cv, sv, rv) = (self.value(centers), self.value(scales), self.value(rotations));
        let p = cv.shape().get(1).copied().unwrap_or(0);
        if cv.shape() != [3, p] || sv.shape() != [3, p] || rv.shape() != [4, p] {
            return Err(Error::shape(
                "project_gaussians",
                format!("centers {:?}, scales {:?}, rotations {:?}", cv.shape(), sv.shape(), rv.shape()),
            ));
        }
        let mut out = vec![T::zero(); 5 * p];
        let mut depth = vec![0.0; p];
        let mut visible = vec![false; p];
        // d(u, v, a, b, c) / d(center, scale, quaternion), 5×10 per Gaussian.
        let mut jac = vec![[[0.0f64; 10]; 5]; p];
        for i in 0..p {
            let (pc, sc, qc) = (column::<T, 3>(&cv, i, p), column::<T, 3>(&sv, i, p), column::<T, 4>(&rv, i, p));
            let pd = std::array::from_fn(|k| Dual::<10>::var(pc[k], k));
            let sd = std::array::from_fn(|k| Dual::<10>::var(sc[k], 3 + k));
            let qd = std::array::from_fn(|k| Dual::<10>::var(qc[k], 6 + k));
            if let Some((vals, z)) = project_one(pd, sd, qd, camera, cov_epsilon) {
                visible[i] = true;
                depth[i] = z;
                for o in 0..5 {
                    out[o * p + i] = T::of(vals[o].v);
                    jac[i][o] = vals[o].d;
                }
            }
        }
        let params = self.push(Tensor::new(&[5, p], out)?, &[centers, scales, rotations], move |g, sink| {
            let g = g.data();
            let mut grads = [vec![T::zero(); 3 * p], vec![T::zero(); 3 * p], vec![T::zero(); 4 * p]];
            for (i, jac) in jac.iter().enumerate() {
                let go: [f64; 5] = std::array::from_fn(|o| g[o * p + i].as_f64());
                for k in 0..10 {
                    let d: f64 = (0..5).map(|o| go[o] * jac[o][k]).sum();
                    let (which, row) = match k {
                        0..=2 => (0, k),
                        3..=5 => (1, k - 3),
                        _ => (2, k - 6),
                    };
                    grads[which][row * p + i] += T::of(d);
                }
            }
            let [gc, gs, gr] = grads;
            sink.add(centers, &gc);
            sink.add(scales, &gs);
            sink.add(rotations, &gr);
        });
        Ok(ProjectedGaussians { params, depth, visible })
    }

    /// Composite projected splats front to back into a `[3, H, W]` image.
    pub fn rasterize(
        &self,
        proj: &ProjectedGaussians,
        opacities: Var,
        colors: Var,
        height: usize,
        width: usize,
        settings: &RenderSettings,
    ) -> Result<RenderOutput<T>> {
        let pv = self.value(proj.params);
        let (ov, colv) = (self.value(opacities), self.value(colors));
        let p = proj.visible.len();
        if pv.shape() != [5, p] || ov.shape() != [1, p] || colv.shape() != [3, p] {
            return Err(Error::shape(
                "rasterize",
                format!("params {:?}, opacities {:?}, colors {:?}", pv.shape(), ov.shape(), colv.shape()),
            ));
        }
        let splats: Arc<Vec<Splat>> = Arc::new(
            (0..p)
                .map(|i| Splat::new(&pv, &ov, &colv, i, p, proj.visible[i], settings.cull_sigma, width, height))
                .collect(),
        );
        let mut order: Vec<usize> = (0..p).filter(|&i| proj.visible[i]).collect();
        order.sort_by(|&a, &b| proj.depth[a].total_cmp(&proj.depth[b]).then(a.cmp(&b)));
        let npx = height * width;
        let mut trans = vec![1.0f64; npx];
        let mut stop = vec![usize::MAX; npx];
        let mut accum = vec![0.0f64; 3 * npx];
        let mut weight = vec![0.0f64; npx];
        for (rank, &i) in order.iter().enumerate() {
            let s = &splats[i];
            for y in s.y0..s.y1 {
                for x in s.x0..s.x1 {
                    let px = y * width + x;
                    if stop[px] != usize::MAX {
                        continue;
                    }
                    let (alpha, _, _) = s.alpha(x as f64, y as f64);
                    let wgt = alpha * trans[px];
                    for ch in 0..3 {
                        accum[ch * npx + px] += s.color[ch] * wgt;
                    }
                    weight[px] += wgt;
                    trans[px] *= 1.0 - alpha;
                    if trans[px] < settings.min_transmittance {
                        stop[px] = rank;
                    }
                }
            }
        }
        let bg = settings.background;
        let image: Vec<T> = (0..3 * npx)
            .map(|k| T::of(accum[k] + trans[k % npx] * bg[k / npx]))
            .collect();
        let transmittance = Tensor::new(&[1, height, width], trans.iter().map(|&t| T::of(t)).collect())?;
        let weight_sum = Tensor::new(&[1, height, width], weight.iter().map(|&t| T::of(t)).collect())?;
        let params = proj.params;
        let image = self.push(Tensor::new(&[3, height, width], image)?, &[params, opacities, colors], move |g, sink| {
            let g = g.data();
            let mut gp = vec![0.0f64; 5 * p];
            let mut go = vec![0.0f64; p];
            let mut gc = vec![0.0f64; 3 * p];
            let mut t_after = trans.clone();
            let mut suffix: Vec<f64> = (0..npx)
                .map(|px| t_after[px] * (0..3).map(|ch| bg[ch] * g[ch * npx + px].as_f64()).sum::<f64>())
                .collect();
            for (rank, &i) in order.iter().enumerate().rev() {
                let s = &splats[i];
                for y in s.y0..s.y1 {
                    for x in s.x0..s.x1 {
                        let px = y * width + x;
                        if rank > stop[px] {
                            continue;
                        }
                        let (alpha, gauss, clamped) = s.alpha(x as f64, y as f64);
                        let t_i = t_after[px] / (1.0 - alpha);
                        let gpx: [f64; 3] = std::array::from_fn(|ch| g[ch * npx + px].as_f64());
                        let cg = s.color[0] * gpx[0] + s.color[1] * gpx[1] + s.color[2] * gpx[2];
                        for ch in 0..3 {
                            gc[ch * p + i] += alpha * t_i * gpx[ch];
                        }
                        let d_alpha = t_i * cg - suffix[px] / (1.0 - alpha);
                        suffix[px] += cg * alpha * t_i;
                        t_after[px] = t_i;
                        if clamped {
                            continue;
                        }
                        go[i] += d_alpha * gauss;
                        let (dx, dy) = (x as f64 - s.u, y as f64 - s.v);
                        let dq = d_alpha * (-0.5 * alpha);
                        gp[i] += dq * (-2.0 * (s.a * dx + s.b * dy));
                        gp[p + i] += dq * (-2.0 * (s.b * dx + s.c * dy));
                        gp[2 * p + i] += dq * dx * dx;
                        gp[3 * p + i] += dq * 2.0 * dx * dy;
                        gp[4 * p + i] += dq * dy * dy;
                    }
                }
            }
            let conv = |v: Vec<f64>| v.into_iter().map(T::of).collect::<Vec<T>>();
            sink.add(params, &conv(gp));
            sink.add(opacities, &conv(go));
            sink.add(colors, &conv(gc));
        });
        Ok(RenderOutput { image, transmittance, weight_sum })
    }
}

/// Rendered image plus per-pixel compositing statistics.
pub struct RenderOutput<T> {
    pub image: Var,
    pub transmittance: Tensor<T>,
    /// `Σ αᵢ Tᵢ` per pixel.
    pub weight_sum: Tensor<T>,
}

struct Splat {
    u: f64,
    v: f64,
    a: f64,
    b: f64,
    c: f64,
    opacity: f64,
    color: [f64; 3],
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Splat {
    #[allow(clippy::too_many_arguments)]
    fn new<T: Real>(
        pv: &Tensor<T>,
        ov: &Tensor<T>,
        cv: &Tensor<T>,
        i: usize,
        p: usize,
        visible: bool,
        cull_sigma: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let [u, v, a, b, c] = column::<T, 5>(pv, i, p);
        let mut s = Splat {
            u,
            v,
            a,
            b,
            c,
            opacity: ov.data()[i].as_f64(),
            color: column::<T, 3>(cv, i, p),
            x0: 0,
            x1: 0,
            y0: 0,
            y1: 0,
        };
        if !visible {
            return s;
        }
        // Extent from the covariance, the inverse of the conic.
        let det = a * c - b * b;
        let (ca, cc) = (c / det, a / det);
        let cb = -b / det;
        let mid = 0.5 * (ca + cc);
        let lmax = mid + (mid * mid - (ca * cc - cb * cb)).max(0.0).sqrt();
        let r = cull_sigma * lmax.max(0.0).sqrt();
        if !(r.is_finite() && u.is_finite() && v.is_finite()) {
            return s;
        }
        let lo = |center: f64| (center - r).ceil().max(0.0);
        let hi = |center: f64, n: usize| ((center + r).floor() + 1.0).min(n as f64).max(0.0);
        s.x0 = lo(u) as usize;
        s.x1 = hi(u, width) as usize;
        s.y0 = lo(v) as usize;
        s.y1 = hi(v, height) as usize;
        s
    }

    /// `(α, exp(−q/2), clamped)` at pixel `(x, y)`.
    fn alpha(&self, x: f64, y: f64) -> (f64, f64, bool) {
        let (dx, dy) = (x - self.u, y - self.v);
        let q = self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy;
        let gauss = (-0.5 * q).exp();
        let alpha = self.opacity * gauss;
        if alpha > MAX_ALPHA {
            (MAX_ALPHA, gauss, true)
        } else {
            (alpha, gauss, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, IDENTITY};

    fn cam() -> Camera {
        let k = Intrinsics { fx: 20.0, fy: 20.0, cx: 7.0, cy: 5.0 };
        Camera::new(k, IDENTITY, [0.0; 3], 0.5, 20.0).unwrap()
    }

    fn render(
        centers: Vec<f64>,
        scale: f64,
        opacities: Vec<f64>,
        colors: Vec<f64>,
        settings: &RenderSettings,
    ) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
        let n = opacities.len();
        let g = Graph::<f64>::new();
        let c = g.constant(Tensor::new(&[3, n], centers).unwrap());
        let s = g.constant(Tensor::full(&[3, n], scale));
        let r = g.constant(Tensor::from_fn(&[4, n], |i| if i < n { 1.0 } else { 0.0 }));
        let proj = g.project_gaussians(c, s, r, &cam(), settings.cov_epsilon).unwrap();
        let o = g.constant(Tensor::new(&[1, n], opacities).unwrap());
        let col = g.constant(Tensor::new(&[3, n], colors).unwrap());
        let out = g.rasterize(&proj, o, col, 11, 15, settings).unwrap();
        (g.value(out.image).as_ref().clone(), out.transmittance, out.weight_sum)
    }

    #[test]
    fn empty_set_renders_background() {
        let settings = RenderSettings { background: [0.2, 0.4, 0.9], ..Default::default() };
        let (img, _, _) = render(vec![], 0.1, vec![], vec![], &settings);
        for ch in 0..3 {
            assert!(img.data()[ch * 165..(ch + 1) * 165].iter().all(|&v| v == settings.background[ch]));
        }
    }

    #[test]
    fn on_axis_isotropic_splat_is_symmetric_and_peaked_at_principal_point() {
        let (img, _, _) = render(vec![0.0, 0.0, 4.0], 0.4, vec![0.999], vec![1.0, 1.0, 1.0], &RenderSettings::default());
        let at = |x: usize, y: usize| img.data()[y * 15 + x];
        let peak = at(7, 5);
        assert!(img.data()[..165].iter().all(|&v| v <= peak));
        for (dx, dy) in [(1, 0), (2, 1), (3, 2)] {
            let ring = [at(7 + dx, 5 + dy), at(7 - dx, 5 - dy), at(7 + dy, 5 + dx), at(7 - dy, 5 - dx)];
            assert!(ring.iter().all(|&v| (v - ring[0]).abs() < 1e-12), "{ring:?}");
        }
    }

    #[test]
    fn back_splat_weight_is_alpha_times_front_transmittance() {
        // Front splat red, back splat green; each channel isolates one weight.
        // Columns are (0, 0, 3) and (0.1, -0.1, 5).
        let centers = vec![0.0, 0.1, 0.0, -0.1, 3.0, 5.0];
        let settings = RenderSettings { cull_sigma: 50.0, min_transmittance: 0.0, ..Default::default() };
        let (img, _, _) = render(centers.clone(), 0.3, vec![0.6, 0.7], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &settings);
        let k = cam().intrinsics;
        let alpha = |x: f64, y: f64, cx: f64, cy: f64, cz: f64, o: f64| {
            let (u, v) = (k.fx * cx / cz + k.cx, k.fy * cy / cz + k.cy);
            // Isotropic Σ = s²I gives cov = s²·J·Jᵀ.
            let f2 = (k.fx * 0.3 / cz).powi(2);
            let (tx, ty) = (cx / cz, cy / cz);
            let (ca, cb, cc) = (f2 * (1.0 + tx * tx) + 1e-6, f2 * tx * ty, f2 * (1.0 + ty * ty) + 1e-6);
            let det = ca * cc - cb * cb;
            let (dx, dy) = (x - u, y - v);
            let q = (cc * dx * dx - 2.0 * cb * dx * dy + ca * dy * dy) / det;
            o * (-0.5 * q).exp()
        };
        for (x, y) in [(7, 5), (8, 4), (6, 6)] {
            let (xf, yf) = (x as f64, y as f64);
            let a_front = alpha(xf, yf, 0.0, 0.0, 3.0, 0.6);
            let a_back = alpha(xf, yf, 0.1, -0.1, 5.0, 0.7);
            assert!((img.data()[y * 15 + x] - a_front).abs() < 1e-9);
            assert!((img.data()[165 + y * 15 + x] - a_back * (1.0 - a_front)).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_and_transmittance_sum_to_one() {
        let n = 30;
        let centers: Vec<f64> = (0..3 * n)
            .map(|i| match i / n {
                0 => ((i * 37) % 11) as f64 * 0.05 - 0.25,
                1 => ((i * 53) % 7) as f64 * 0.05 - 0.15,
                _ => 2.0 + ((i * 17) % 13) as f64 * 0.2,
            })
            .collect();
        let op: Vec<f64> = (0..n).map(|i| 0.3 + 0.02 * i as f64).collect();
        let (_, t, w) = render(centers, 0.1, op, vec![0.5; 3 * n], &RenderSettings::default());
        for (a, b) in t.data().iter().zip(w.data()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
