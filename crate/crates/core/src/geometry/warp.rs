use crate::error::{Error, Result};
use crate::tensors::{Graph, Real, Tensor, Var};

use super::camera::{matmul, matvec, transpose, Camera};
use super::depth::MetricDepth;

/// Relative pose `src ← ref`: `X_src = M X_ref + c`.
fn relative_pose(reference: &Camera, source: &Camera) -> ([[f64; 3]; 3], [f64; 3]) {
    let m = matmul(&source.rotation, &transpose(&reference.rotation));
    let mt = matvec(&m, reference.translation);
    let c = [
        source.translation[0] - mt[0],
        source.translation[1] - mt[1],
        source.translation[2] - mt[2],
    ];
    (m, c)
}

/// Pixel coordinates in `source` of every reference pixel lifted to its depth.
///
/// Returns `[2, H, W]` coordinates (differentiable in depth) and a `[1, H, W]`
/// mask that is zero where the point falls behind the source camera. Such
/// pixels get coordinates `(-1, -1)`, which always sample as invalid.
pub fn reproject<T: Real>(
    g: &Graph<T>,
    depth: MetricDepth,
    reference: &Camera,
    source: &Camera,
) -> Result<(Var, Tensor<T>)> {
    let dv = g.value(depth.0);
    let (one, h, w) = dv.dims3()?;
    if one != 1 {
        return Err(Error::shape("reproject", format!("depth must be [1, H, W], got {:?}", dv.shape())));
    }
    let (m, c) = relative_pose(reference, source);
    let kr = reference.intrinsics;
    let ks = source.intrinsics;
    let zmin = source.min_depth();
    let p = h * w;
    // Ray directions a = M r and per-pixel derivatives du/dd, dv/dd.
    let mut coords = vec![T::zero(); 2 * p];
    let mut front = vec![T::zero(); p];
    let mut du = vec![0.0f64; p];
    let mut dvv = vec![0.0f64; p];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = dv.data()[i].as_f64();
            let r = [(x as f64 - kr.cx) / kr.fx, (y as f64 - kr.cy) / kr.fy, 1.0];
            let a = matvec(&m, r);
            let q = [d * a[0] + c[0], d * a[1] + c[1], d * a[2] + c[2]];
            if q[2] <= zmin || !d.is_finite() {
                coords[i] = T::of(-1.0);
                coords[p + i] = T::of(-1.0);
                continue;
            }
            front[i] = T::one();
            coords[i] = T::of(ks.fx * q[0] / q[2] + ks.cx);
            coords[p + i] = T::of(ks.fy * q[1] / q[2] + ks.cy);
            let z2 = q[2] * q[2];
            du[i] = ks.fx * (a[0] * q[2] - q[0] * a[2]) / z2;
            dvv[i] = ks.fy * (a[1] * q[2] - q[1] * a[2]) / z2;
        }
    }
    let coords = Tensor::new(&[2, h, w], coords)?;
    let front = Tensor::new(&[1, h, w], front)?;
    let d = depth.0;
    let var = g.push(coords, &[d], move |g, sink| {
        if let Some(gd) = sink.slot(d) {
            let g = g.data();
            for i in 0..p {
                gd[i] += g[i] * T::of(du[i]) + g[p + i] * T::of(dvv[i]);
            }
        }
    });
    Ok((var, front))
}

/// Warp a source-view feature `[C, H, W]` into the reference view using the
/// reference depth. The returned mask is one where the reprojection lands in
/// front of the source camera and fully inside the source image.
pub fn warp_to_reference<T: Real>(
    g: &Graph<T>,
    source_feature: Var,
    reference_depth: MetricDepth,
    reference: &Camera,
    source: &Camera,
) -> Result<(Var, Tensor<T>)> {
    let (coords, front) = reproject(g, reference_depth, reference, source)?;
    let (warped, inside) = g.grid_sample(source_feature, coords)?;
    let mask = Tensor::new(
        front.shape(),
        front.data().iter().zip(inside.data()).map(|(&a, &b)| a * b).collect(),
    )?;
    Ok((warped, mask))
}

/// Feature `[C, H, W]` multiplied by a `[1, H, W]` constant plane.
pub(crate) fn mul_plane<T: Real>(g: &Graph<T>, x: Var, plane: &Tensor<T>) -> Result<Var> {
    let shape = g.shape(x);
    let inner = plane.len();
    let c = shape[0];
    let full = Tensor::from_fn(&shape, |i| plane.data()[i % inner]);
    debug_assert_eq!(full.len(), c * inner);
    g.mul(x, g.constant(full))
}

/// Per reference view: the mean of the valid warped features of every other
/// view, and the per-pixel count of valid sources. Pixels with no valid source
/// are zero.
pub fn aligned_feature<T: Real>(
    g: &Graph<T>,
    features: &[Var],
    depths: &[MetricDepth],
    cameras: &[Camera],
) -> Result<Vec<(Var, Tensor<T>)>> {
    if features.is_empty() || features.len() != depths.len() || features.len() != cameras.len() {
        return Err(Error::shape(
            "aligned_feature",
            format!(
                "{} features, {} depths, {} cameras",
                features.len(),
                depths.len(),
                cameras.len()
            ),
        ));
    }
    let shape = g.shape(features[0]);
    let plane: Vec<usize> = std::iter::once(1).chain(shape[1..].iter().copied()).collect();
    let mut out = Vec::with_capacity(features.len());
    for r in 0..features.len() {
        let mut acc: Option<Var> = None;
        let mut count = Tensor::<T>::zeros(&plane);
        for s in (0..features.len()).filter(|&s| s != r) {
            let (warped, mask) = warp_to_reference(g, features[s], depths[r], &cameras[r], &cameras[s])?;
            let masked = mul_plane(g, warped, &mask)?;
            for (c, &m) in count.data_mut().iter_mut().zip(mask.data()) {
                *c += m;
            }
            acc = Some(match acc {
                Some(a) => g.add(a, masked)?,
                None => masked,
            });
        }
        let mean = match acc {
            Some(sum) => {
                let inv = count.map(|c| if c > T::zero() { T::one() / c } else { T::zero() });
                mul_plane(g, sum, &inv)?
            }
            None => g.constant(Tensor::zeros(&shape)),
        };
        out.push((mean, count));
    }
    Ok(out)
}

/// World-space points `[3, H·W]` of every pixel of `depth` seen from `camera`.
pub fn backproject_depth<T: Real>(g: &Graph<T>, depth: MetricDepth, camera: &Camera) -> Result<Var> {
    let dv = g.value(depth.0);
    let (one, h, w) = dv.dims3()?;
    if one != 1 {
        return Err(Error::shape("backproject", format!("depth must be [1, H, W], got {:?}", dv.shape())));
    }
    let p = h * w;
    let k = camera.intrinsics;
    let rt = transpose(&camera.rotation);
    // world = Rᵀ (d r - t) = d (Rᵀ r) - Rᵀ t
    let offset = matvec(&rt, camera.translation);
    let mut dirs = vec![[0.0f64; 3]; p];
    let mut out = vec![T::zero(); 3 * p];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dir = matvec(&rt, [(x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0]);
            let d = dv.data()[i].as_f64();
            for a in 0..3 {
                out[a * p + i] = T::of(d * dir[a] - offset[a]);
            }
            dirs[i] = dir;
        }
    }
    let out = Tensor::new(&[3, p], out)?;
    let dvar = depth.0;
    Ok(g.push(out, &[dvar], move |g, sink| {
        if let Some(gd) = sink.slot(dvar) {
            let g = g.data();
            for (i, dir) in dirs.iter().enumerate() {
                gd[i] += T::of(dir[0]) * g[i] + T::of(dir[1]) * g[p + i] + T::of(dir[2]) * g[2 * p + i];
            }
        }
    }))
}
