//! Binary PPM images and 3DGS-style PLY export.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensors::{Real, Tensor};

use super::set::GaussianSet;

/// Encode a `[3, H, W]` image in `[0, 1]` as binary PPM (P6, maxval 255).
pub fn encode_ppm<T: Real>(image: &Tensor<T>) -> Result<Vec<u8>> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        return Err(Error::shape("ppm", format!("expected 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    out.reserve(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            let v = image.data()[ch * plane + i].as_f64().clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Next whitespace-separated header token, skipping `#` comments.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("PPM header ends early".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Format("PPM header is not ASCII".into()))
}

/// Decode a binary PPM (P6, maxval ≤ 255) into a `[3, H, W]` image in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != "P6" {
        return Err(Error::Format("not a binary PPM (P6)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = header_token(bytes, &mut pos)?;
        t.parse().map_err(|_| Error::Format(format!("PPM {what} '{t}' is not a number")))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PPM maxval {maxval} unsupported (need 1..=255)")));
    }
    let pos = pos + 1;
    let plane = w * h;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() < 3 * plane {
        return Err(Error::Truncated { what: "PPM pixel data", expected: 3 * plane, actual: body.len() });
    }
    let scale = 1.0 / maxval as f32;
    Ok(Tensor::from_fn(&[3, h, w], |i| {
        let (ch, p) = (i / plane, i % plane);
        body[3 * p + ch] as f32 * scale
    }))
}

pub fn write_ppm<T: Real>(path: impl AsRef<Path>, image: &Tensor<T>) -> Result<()> {
    std::fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    decode_ppm(&std::fs::read(path)?)
}

/// DC spherical-harmonic coefficient `Y₀⁰`.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

pub const PLY_PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    (p / (1.0 - p)).ln()
}

/// Binary little-endian PLY using the usual 3DGS conventions: opacity as a
/// logit, log scales, `f_dc = (color − 0.5) / SH_C0`.
pub fn encode_ply(set: &GaussianSet) -> Result<Vec<u8>> {
    set.validate()?;
    let p = set.len();
    let mut out = Vec::new();
    write!(out, "ply\nformat binary_little_endian 1.0\nelement vertex {p}\n")?;
    for name in PLY_PROPERTIES {
        writeln!(out, "property float {name}")?;
    }
    out.extend_from_slice(b"end_header\n");
    let at = |t: &Tensor<f32>, r: usize, i: usize| t.data()[r * p + i] as f64;
    for i in 0..p {
        let mut row = [0.0f64; 17];
        for k in 0..3 {
            row[k] = at(&set.centers, k, i);
            row[6 + k] = (at(&set.colors, k, i) - 0.5) / SH_C0;
            row[10 + k] = at(&set.scales, k, i).ln();
        }
        row[9] = logit(at(&set.opacities, 0, i));
        for k in 0..4 {
            row[13 + k] = at(&set.rotations, k, i);
        }
        for v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Inverse of [`encode_ply`] for files with exactly its property layout.
pub fn decode_ply(bytes: &[u8]) -> Result<GaussianSet> {
    let end = b"end_header\n";
    let split = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| Error::Format("PLY has no end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Format("PLY header is not UTF-8".into()))?;
    let mut count = None;
    let mut props = Vec::new();
    for line in header.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", fmt, ..] if *fmt != "binary_little_endian" => {
                return Err(Error::Format(format!("PLY format {fmt} unsupported")))
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::Format(format!("bad vertex count '{n}'")))?)
            }
            ["property", "float", name] => props.push(name.to_string()),
            _ => {}
        }
    }
    if props != PLY_PROPERTIES {
        return Err(Error::Format(format!("unexpected PLY properties {props:?}")));
    }
    let p = count.ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    let body = &bytes[split + end.len()..];
    if body.len() != p * 17 * 4 {
        return Err(Error::Truncated { what: "PLY vertex data", expected: p * 68, actual: body.len() });
    }
    let val = |i: usize, k: usize| {
        let o = (i * 17 + k) * 4;
        f32::from_le_bytes(body[o..o + 4].try_into().expect("4 bytes")) as f64
    };
    let build = |c: usize, f: &dyn Fn(usize, usize) -> f64| Tensor::from_fn(&[c, p], |j| f(j / p, j % p) as f32);
    Ok(GaussianSet {
        centers: build(3, &|r, i| val(i, r)),
        scales: build(3, &|r, i| val(i, 10 + r).exp()),
        rotations: build(4, &|r, i| val(i, 13 + r)),
        opacities: build(1, &|_, i| 1.0 / (1.0 + (-val(i, 9)).exp())),
        colors: build(3, &|r, i| val(i, 6 + r) * SH_C0 + 0.5),
    })
}

pub fn write_ply(path: impl AsRef<Path>, set: &GaussianSet) -> Result<()> {
    std::fs::write(path, encode_ply(set)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_exact_on_the_8_bit_grid() {
        let img = Tensor::<f32>::from_fn(&[3, 5, 7], |i| ((i * 37) % 256) as f32 / 255.0);
        let bytes = encode_ppm(&img).unwrap();
        assert!(bytes.starts_with(b"P6\n7 5\n255\n"));
        let back = decode_ppm(&bytes).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert!(back.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn ppm_header_comments_and_truncation() {
        let mut bytes = b"P6 # comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255]);
        assert!(matches!(decode_ppm(&bytes), Err(Error::Truncated { .. })));
        bytes.push(0);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(decode_ppm(b"P3\n1 1\n255\n").is_err());
    }

    #[test]
    fn ply_round_trip() {
        let p = 4;
        let q = [0.5f32, 0.5, 0.5, 0.5];
        let set = GaussianSet {
            centers: Tensor::from_fn(&[3, p], |i| i as f32 * 0.25 - 1.0),
            scales: Tensor::from_fn(&[3, p], |i| 0.01 + i as f32 * 0.01),
            rotations: Tensor::from_fn(&[4, p], |i| q[i / p]),
            opacities: Tensor::from_fn(&[1, p], |i| 0.2 + i as f32 * 0.2),
            colors: Tensor::from_fn(&[3, p], |i| i as f32 / 12.0),
        };
        let bytes = encode_ply(&set).unwrap();
        let header = String::from_utf8_lossy(&bytes[..300]);
        assert!(header.contains("element vertex 4") && header.contains("property float f_dc_0"));
        let back = decode_ply(&bytes).unwrap();
        for (a, b) in [
            (&set.centers, &back.centers),
            (&set.scales, &back.scales),
            (&set.rotations, &back.rotations),
            (&set.opacities, &back.opacities),
            (&set.colors, &back.colors),
        ] {
            assert!(a.max_abs_diff(b) < 1e-5);
        }
    }
}
