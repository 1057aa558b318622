//! The packed `.csplat` scene bitstream.
//!
//! ```text
//! "CSPL" | version u8 | λ f32 | level count u8
//! camera block: u32 length | Deflate(camera payload)
//! per view, per level (hyper first): u32 length | range-coded bytes
//! ```
//! The camera payload is `H u16, W u16, N u8`, then per view
//! `fx fy cx cy`, 9 rotation entries (row-major), 3 translation entries,
//! `near far`, all `f32`. Everything is little-endian.

use crate::error::{Error, Result};
use crate::geometry::{Camera, Intrinsics};

use super::deflate::{deflate, inflate};

pub const MAGIC: [u8; 4] = *b"CSPL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
const CAMERA_FLOATS: usize = 4 + 9 + 3 + 2;

/// Decoded contents of a scene bitstream.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBitstream {
    pub lambda: f32,
    pub height: usize,
    pub width: usize,
    pub cameras: Vec<Camera>,
    /// `streams[view][level]`, level 0 the hyper-latent.
    pub streams: Vec<Vec<Vec<u8>>>,
}

/// Byte accounting of a packed stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedLayout {
    pub header: usize,
    /// Length prefix plus Deflate payload.
    pub camera_block: usize,
    pub camera_payload_raw: usize,
    /// Length prefix plus payload, `[view][level]`.
    pub streams: Vec<Vec<usize>>,
}

impl PackedLayout {
    pub fn total(&self) -> usize {
        self.header + self.camera_block + self.streams.iter().flatten().sum::<usize>()
    }
}

impl SceneBitstream {
    pub fn level_count(&self) -> usize {
        self.streams.first().map_or(0, |v| v.len())
    }
}

pub fn encode_cameras(height: usize, width: usize, cameras: &[Camera]) -> Result<Vec<u8>> {
    let h = u16::try_from(height).map_err(|_| Error::Format(format!("height {height} exceeds u16")))?;
    let w = u16::try_from(width).map_err(|_| Error::Format(format!("width {width} exceeds u16")))?;
    let n = u8::try_from(cameras.len()).map_err(|_| Error::Format(format!("{} views exceed u8", cameras.len())))?;
    let mut out = Vec::with_capacity(5 + 4 * CAMERA_FLOATS * cameras.len());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.push(n);
    for c in cameras {
        let k = c.intrinsics;
        let mut vals = vec![k.fx, k.fy, k.cx, k.cy];
        vals.extend(c.rotation.iter().flatten());
        vals.extend(c.translation);
        vals.extend([c.near, c.far]);
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_cameras(raw: &[u8]) -> Result<(usize, usize, Vec<Camera>)> {
    if raw.len() < 5 {
        return Err(Error::Truncated { what: "camera payload", expected: 5, actual: raw.len() });
    }
    let h = u16::from_le_bytes([raw[0], raw[1]]) as usize;
    let w = u16::from_le_bytes([raw[2], raw[3]]) as usize;
    let n = raw[4] as usize;
    let expected = 5 + 4 * CAMERA_FLOATS * n;
    if raw.len() != expected {
        return Err(Error::Truncated { what: "camera payload", expected, actual: raw.len() });
    }
    let floats: Vec<f64> = raw[5..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let cameras = floats
        .chunks_exact(CAMERA_FLOATS)
        .map(|v| {
            let k = Intrinsics { fx: v[0], fy: v[1], cx: v[2], cy: v[3] };
            let r = [[v[4], v[5], v[6]], [v[7], v[8], v[9]], [v[10], v[11], v[12]]];
            Camera::new(k, r, [v[13], v[14], v[15]], v[16], v[17])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((h, w, cameras))
}

fn push_block(out: &mut Vec<u8>, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| Error::Format("block exceeds 4 GiB".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(())
}

pub fn pack(scene: &SceneBitstream) -> Result<Vec<u8>> {
    if scene.streams.len() != scene.cameras.len() {
        return Err(Error::Format(format!(
            "{} feature streams for {} cameras",
            scene.streams.len(),
            scene.cameras.len()
        )));
    }
    let levels = scene.level_count();
    if scene.streams.iter().any(|v| v.len() != levels) {
        return Err(Error::Format("every view needs the same number of levels".into()));
    }
    let levels = u8::try_from(levels).map_err(|_| Error::Format(format!("{levels} levels exceed u8")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&scene.lambda.to_le_bytes());
    out.push(levels);
    push_block(&mut out, &deflate(&encode_cameras(scene.height, scene.width, &scene.cameras)?))?;
    for view in &scene.streams {
        for level in view {
            push_block(&mut out, level)?;
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated { what, expected: end, actual: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn block(&mut self, what: &'static str) -> Result<&'a [u8]> {
        let len = u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize;
        self.take(len, what)
    }
}

pub fn unpack(bytes: &[u8]) -> Result<SceneBitstream> {
    unpack_with_layout(bytes).map(|(s, _)| s)
}

pub fn unpack_with_layout(bytes: &[u8]) -> Result<(SceneBitstream, PackedLayout)> {
    let mut r = Reader { bytes, pos: 0 };
    let header = r.take(HEADER_LEN, "header")?;
    if header[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"CSPL\"", &header[..4])));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported bitstream version {}, expected {VERSION}", header[4])));
    }
    let lambda = f32::from_le_bytes(header[5..9].try_into().unwrap());
    let levels = header[9] as usize;
    let cam_block = r.block("camera block")?;
    let raw = inflate(cam_block)?;
    let (height, width, cameras) = decode_cameras(&raw)?;
    let mut streams = Vec::with_capacity(cameras.len());
    let mut sizes = Vec::with_capacity(cameras.len());
    for _ in 0..cameras.len() {
        let mut view = Vec::with_capacity(levels);
        let mut view_sizes = Vec::with_capacity(levels);
        for _ in 0..levels {
            let s = r.block("feature stream")?;
            view_sizes.push(4 + s.len());
            view.push(s.to_vec());
        }
        streams.push(view);
        sizes.push(view_sizes);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt {
            position: r.pos,
            detail: format!("{} trailing bytes after the last stream", bytes.len() - r.pos),
        });
    }
    let layout = PackedLayout {
        header: HEADER_LEN,
        camera_block: 4 + cam_block.len(),
        camera_payload_raw: raw.len(),
        streams: sizes,
    };
    Ok((SceneBitstream { lambda, height, width, cameras, streams }, layout))
}
