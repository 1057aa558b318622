use crate::error::{Error, Result};
use crate::tensors::Tensor;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Pinhole intrinsics in pixels. Pixel `(x, y)` sits at image coordinate `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Posed pinhole camera with a world-to-camera rigid transform and depth bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub near: f64,
    pub far: f64,
}

/// Image-plane location of a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    /// False when the point lies behind (or too close to) the camera plane.
    pub valid: bool,
}

pub(crate) fn matvec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rotation about the y axis (yaw), then the x axis (pitch), as a matrix.
pub fn rotation_yaw_pitch(yaw: f64, pitch: f64) -> Mat3 {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    matmul(&rx, &ry)
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, rotation: Mat3, translation: Vec3, near: f64, far: f64) -> Result<Self> {
        if !(near > 0.0 && far > near && far.is_finite()) {
            return Err(Error::Camera(format!("need far > near > 0, got near={near} far={far}")));
        }
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::Camera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                intrinsics.fx, intrinsics.fy
            )));
        }
        let rrt = matmul(&rotation, &transpose(&rotation));
        let ortho_err = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (rrt[i][j] - IDENTITY[i][j]).abs())
            .fold(0.0, f64::max);
        if ortho_err > 1e-6 || (det(&rotation) - 1.0).abs() > 1e-6 {
            return Err(Error::Camera(format!(
                "rotation is not a proper orthonormal matrix (orthogonality error {ortho_err:.2e}, det {:.6})",
                det(&rotation)
            )));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            near,
            far,
        })
    }

    /// Camera at world position `center` with the given camera-to-world-aligned rotation.
    pub fn from_center(intrinsics: Intrinsics, rotation: Mat3, center: Vec3, near: f64, far: f64) -> Result<Self> {
        let rc = matvec(&rotation, center);
        Self::new(intrinsics, rotation, [-rc[0], -rc[1], -rc[2]], near, far)
    }

    /// Camera centre in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3 {
        let c = mat_t_vec(&self.rotation, self.translation);
        [-c[0], -c[1], -c[2]]
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let q = matvec(&self.rotation, p);
        [q[0] + self.translation[0], q[1] + self.translation[1], q[2] + self.translation[2]]
    }

    pub fn camera_to_world(&self, q: Vec3) -> Vec3 {
        mat_t_vec(
            &self.rotation,
            [q[0] - self.translation[0], q[1] - self.translation[1], q[2] - self.translation[2]],
        )
    }

    /// Minimum camera-space depth treated as in front of the camera.
    pub fn min_depth(&self) -> f64 {
        self.near * 1e-3
    }

    pub fn project(&self, world: Vec3) -> Projection {
        let q = self.world_to_camera(world);
        let k = &self.intrinsics;
        if q[2] <= self.min_depth() {
            return Projection {
                u: f64::NAN,
                v: f64::NAN,
                depth: q[2],
                valid: false,
            };
        }
        Projection {
            u: k.fx * q[0] / q[2] + k.cx,
            v: k.fy * q[1] / q[2] + k.cy,
            depth: q[2],
            valid: true,
        }
    }

    /// World point seen at pixel `(u, v)` with camera-space depth `depth`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        self.camera_to_world([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
    }

    /// Same pose at a resolution scaled by `s` (pixel `x` maps to `x · s`).
    pub fn scaled(&self, s: f64) -> Self {
        let k = self.intrinsics;
        Self {
            intrinsics: Intrinsics {
                fx: k.fx * s,
                fy: k.fy * s,
                cx: k.cx * s,
                cy: k.cy * s,
            },
            ..*self
        }
    }

    /// Camera with every field rounded through `f32`, as stored in a bitstream.
    pub fn to_f32_precision(&self) -> Self {
        let r = |x: f64| x as f32 as f64;
        let k = self.intrinsics;
        Self {
            intrinsics: Intrinsics {
                fx: r(k.fx),
                fy: r(k.fy),
                cx: r(k.cx),
                cy: r(k.cy),
            },
            rotation: self.rotation.map(|row| row.map(r)),
            translation: self.translation.map(r),
            near: r(self.near),
            far: r(self.far),
        }
    }
}

/// One posed input image, stored `[3, H, W]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextView {
    pub image: Tensor<f32>,
    pub camera: Camera,
}

impl ContextView {
    pub fn new(image: Tensor<f32>, camera: Camera) -> Result<Self> {
        let (c, _, _) = image.dims3()?;
        if c != 3 {
            return Err(Error::shape("context view", format!("expected 3 channels, got {c}")));
        }
        Ok(Self { image, camera })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

/// Reject empty view lists and inconsistent image sizes; returns `(H, W)`.
pub fn scene_dims(views: &[ContextView]) -> Result<(usize, usize)> {
    let first = views
        .first()
        .ok_or_else(|| Error::shape("scene", "no context views"))?;
    let (h, w) = (first.height(), first.width());
    if let Some((i, v)) = views.iter().enumerate().find(|(_, v)| (v.height(), v.width()) != (h, w)) {
        return Err(Error::shape(
            "scene",
            format!("view {i} is {}x{}, view 0 is {h}x{w}", v.height(), v.width()),
        ));
    }
    Ok((h, w))
}
