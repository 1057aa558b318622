//! Parameter checkpoint file.
//!
//! ```text
//! "CSCK" | version u8 | meta: u32 len + UTF-8 key=value lines | count u32
//! manifest, per parameter: u32 len + identifier | group u8 | ndim u8 | dims u32 × ndim
//! payload, per parameter in manifest order: values as little-endian f32
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::param::{ParamGroup, ParamStore};
use super::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSCK";
pub const CHECKPOINT_VERSION: u8 = 1;

fn group_code(g: ParamGroup) -> u8 {
    match g {
        ParamGroup::Backbone => 0,
        ParamGroup::Codec => 1,
        ParamGroup::Decoder => 2,
    }
}

fn group_from(code: u8) -> Result<ParamGroup> {
    Ok(match code {
        0 => ParamGroup::Backbone,
        1 => ParamGroup::Codec,
        2 => ParamGroup::Decoder,
        c => return Err(Error::Checkpoint(format!("unknown parameter group {c}"))),
    })
}

pub fn write_checkpoint<T: Real, W: Write>(
    store: &ParamStore<T>,
    meta: &[(String, String)],
    mut w: W,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(CHECKPOINT_VERSION);
    let meta_text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    buf.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta_text.as_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(group_code(p.group));
        buf.push(p.tensor.shape().len() as u8);
        for &d in p.tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, p) in store.iter() {
        for &v in p.tensor.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                what: "checkpoint",
                expected: self.pos + n,
                actual: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parameters stored at `f32`, plus the metadata lines.
pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<(ParamStore<T>, Vec<(String, String)>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let meta_len = c.u32()? as usize;
    let meta_text = std::str::from_utf8(c.take(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata is not UTF-8: {e}")))?;
    let meta = meta_text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let count = c.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let n = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(n)?)
            .map_err(|e| Error::Checkpoint(format!("identifier is not UTF-8: {e}")))?
            .to_string();
        let group = group_from(c.u8()?)?;
        let ndim = c.u8()? as usize;
        let shape = (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        manifest.push((name, group, shape));
    }
    let mut store = ParamStore::new();
    for (name, group, shape) in manifest {
        let n: usize = shape.iter().product();
        let raw = c.take(4 * n)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        store.register(name, Tensor::new(&shape, data)?, group)?;
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - c.pos
        )));
    }
    Ok((store, meta))
}
