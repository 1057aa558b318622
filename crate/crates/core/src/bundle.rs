//! Scene bundles on disk: `view_{i}.ppm` images, a `cameras.txt` file with one
//! line per view, and optional `depth_{i}.pfm` ground-truth depth.
//!
//! A camera line holds 18 numbers: `fx fy cx cy`, the world-to-camera rotation
//! row-major, the translation, then `near far`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussians::io::{read_ppm, write_ppm};
use crate::geometry::{Camera, ContextView, Intrinsics};
use crate::tensors::Tensor;
use crate::training::SyntheticScene;

pub const CAMERAS_FILE: &str = "cameras.txt";
pub const TARGET_CAMERAS_FILE: &str = "target_cameras.txt";

pub fn format_camera(c: &Camera) -> String {
    let k = c.intrinsics;
    let mut s = format!("{} {} {} {}", k.fx, k.fy, k.cx, k.cy);
    for row in c.rotation {
        for v in row {
            write!(s, " {v}").expect("string write");
        }
    }
    for v in c.translation {
        write!(s, " {v}").expect("string write");
    }
    write!(s, " {} {}", c.near, c.far).expect("string write");
    s
}

pub fn parse_cameras(text: &str) -> Result<Vec<Camera>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("camera line {}: bad number '{t}'", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 18 {
            return Err(Error::Format(format!("camera line {} has {} numbers, expected 18", n + 1, v.len())));
        }
        let k = Intrinsics { fx: v[0], fy: v[1], cx: v[2], cy: v[3] };
        let r = [[v[4], v[5], v[6]], [v[7], v[8], v[9]], [v[10], v[11], v[12]]];
        out.push(Camera::new(k, r, [v[13], v[14], v[15]], v[16], v[17])?);
    }
    Ok(out)
}

pub fn write_cameras(path: impl AsRef<Path>, cameras: &[Camera]) -> Result<()> {
    let text: String = cameras.iter().map(|c| format_camera(c) + "\n").collect();
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_cameras(&text)
}

/// Single-channel PFM (`Pf`, little-endian, rows stored bottom to top).
pub fn encode_pfm(map: &Tensor<f32>) -> Result<Vec<u8>> {
    let (c, h, w) = map.dims3()?;
    if c != 1 {
        return Err(Error::shape("pfm", format!("expected one channel, got {c}")));
    }
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&map.data()[y * w + x].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut lines = 0;
    let mut end = 0;
    while lines < 3 {
        let nl = bytes[end..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("PFM header ends early".into()))?;
        end += nl + 1;
        lines += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("PFM header is not ASCII".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "Pf" {
        return Err(Error::Format("not a single-channel PFM".into()));
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM size '{t}'")));
    let (w, h) = (parse(tokens[1])?, parse(tokens[2])?);
    let scale: f64 = tokens[3].parse().map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale >= 0.0 {
        return Err(Error::Format("big-endian PFM unsupported".into()));
    }
    let body = &bytes[end..];
    if body.len() != 4 * w * h {
        return Err(Error::Truncated { what: "PFM data", expected: 4 * w * h, actual: body.len() });
    }
    Ok(Tensor::from_fn(&[1, h, w], |i| {
        let (y, x) = (i / w, i % w);
        let o = 4 * ((h - 1 - y) * w + x);
        f32::from_le_bytes(body[o..o + 4].try_into().expect("4 bytes"))
    }))
}

/// Posed views loaded from a bundle directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub views: Vec<ContextView>,
    pub depths: Option<Vec<Tensor<f32>>>,
}

impl SceneBundle {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cameras = read_cameras(dir.join(CAMERAS_FILE))?;
        if cameras.is_empty() {
            return Err(Error::Format(format!("{} lists no cameras", dir.join(CAMERAS_FILE).display())));
        }
        let mut views = Vec::with_capacity(cameras.len());
        for (i, cam) in cameras.into_iter().enumerate() {
            let image = read_ppm(dir.join(format!("view_{i}.ppm")))?;
            views.push(ContextView::new(image, cam)?);
        }
        crate::geometry::scene_dims(&views)?;
        let depth_paths: Vec<_> = (0..views.len()).map(|i| dir.join(format!("depth_{i}.pfm"))).collect();
        let depths = if depth_paths.iter().all(|p| p.exists()) {
            Some(depth_paths.iter().map(|p| decode_pfm(&std::fs::read(p)?)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self { views, depths })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (i, v) in self.views.iter().enumerate() {
            write_ppm(dir.join(format!("view_{i}.ppm")), &v.image)?;
        }
        write_cameras(dir.join(CAMERAS_FILE), &self.views.iter().map(|v| v.camera).collect::<Vec<_>>())?;
        if let Some(depths) = &self.depths {
            for (i, d) in depths.iter().enumerate() {
                std::fs::write(dir.join(format!("depth_{i}.pfm")), encode_pfm(d)?)?;
            }
        }
        Ok(())
    }
}

/// Write a synthetic scene as a bundle plus its held-out target
/// (`target.ppm`, `target_cameras.txt`, `target_depth.pfm`).
pub fn write_synthetic(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    SceneBundle { views: scene.context.clone(), depths: Some(scene.context_depth.clone()) }.write(dir)?;
    write_ppm(dir.join("target.ppm"), &scene.target.image)?;
    write_cameras(dir.join(TARGET_CAMERAS_FILE), &[scene.target.camera])?;
    std::fs::write(dir.join("target_depth.pfm"), encode_pfm(&scene.target_depth)?)?;
    Ok(())
}
