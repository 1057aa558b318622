//! Baseline: a feature tensor stored as little-endian float16 and Deflated.

use half::f16;

use crate::error::{Error, Result};
use crate::tensors::{Real, Tensor};

use super::deflate::{deflate, inflate};

/// `u8` rank, `u32` dims, then `f16` values, all Deflated.
pub fn naive_tensor_compress<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let mut raw = Vec::with_capacity(1 + 4 * t.shape().len() + 2 * t.len());
    raw.push(t.shape().len() as u8);
    for &d in t.shape() {
        raw.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        raw.extend_from_slice(&f16::from_f64(v.as_f64()).to_le_bytes());
    }
    deflate(&raw)
}

/// Shape and float16 values restored from a baseline payload.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f16>,
}

pub fn naive_tensor_decompress(bytes: &[u8]) -> Result<HalfTensor> {
    let raw = inflate(bytes)?;
    let rank = *raw.first().ok_or_else(|| Error::Format("empty tensor payload".into()))? as usize;
    let header = 1 + 4 * rank;
    if raw.len() < header {
        return Err(Error::Truncated { what: "tensor header", expected: header, actual: raw.len() });
    }
    let shape: Vec<usize> = raw[1..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = shape.iter().product();
    if raw.len() != header + 2 * count {
        return Err(Error::Truncated { what: "tensor values", expected: header + 2 * count, actual: raw.len() });
    }
    let values = raw[header..]
        .chunks_exact(2)
        .map(|c| f16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(HalfTensor { shape, values })
}
