//! Bridge between latent levels and the range coder.

use crate::coder::{rc_decode, rc_encode, CdfTable};
use crate::error::{Error, Result};

use super::{QuantizedLevel, SymbolDistribution};

/// One quantized CDF table per symbol position.
pub fn symbol_tables(dist: &SymbolDistribution, bound: i32) -> Vec<CdfTable> {
    dist.mu
        .iter()
        .zip(&dist.sigma)
        .map(|(&mu, &sigma)| CdfTable::gaussian(mu, sigma, bound))
        .collect()
}

fn index(symbol: i32, bound: i32) -> Result<usize> {
    if symbol.abs() > bound {
        return Err(Error::Symbol { symbol, alphabet: (2 * bound + 1) as usize });
    }
    Ok((symbol + bound) as usize)
}

/// Ideal code length of a level under its quantized tables, in bits.
pub fn inference_bits(level: &QuantizedLevel, dist: &SymbolDistribution, bound: i32) -> Result<f64> {
    check_aligned(level, dist)?;
    let tables = symbol_tables(dist, bound);
    level
        .symbols
        .iter()
        .zip(&tables)
        .map(|(&s, t)| Ok(t.ideal_bits(index(s, bound)?)))
        .sum()
}

fn check_aligned(level: &QuantizedLevel, dist: &SymbolDistribution) -> Result<()> {
    let n: usize = level.shape.iter().product();
    if level.symbols.len() != n || dist.mu.len() != n || dist.sigma.len() != n {
        return Err(Error::shape(
            "entropy coding",
            format!(
                "{} symbols, {} means, {} scales for shape {:?}",
                level.symbols.len(),
                dist.mu.len(),
                dist.sigma.len(),
                level.shape
            ),
        ));
    }
    Ok(())
}

pub fn encode_level(level: &QuantizedLevel, dist: &SymbolDistribution, bound: i32) -> Result<Vec<u8>> {
    check_aligned(level, dist)?;
    let idx = level.symbols.iter().map(|&s| index(s, bound)).collect::<Result<Vec<_>>>()?;
    rc_encode(&idx, &symbol_tables(dist, bound))
}

/// Coded bytes together with the ideal code length in bits, from one set of tables.
pub fn encode_level_measured(level: &QuantizedLevel, dist: &SymbolDistribution, bound: i32) -> Result<(Vec<u8>, f64)> {
    check_aligned(level, dist)?;
    let idx = level.symbols.iter().map(|&s| index(s, bound)).collect::<Result<Vec<_>>>()?;
    let tables = symbol_tables(dist, bound);
    let bits = idx.iter().zip(&tables).map(|(&i, t)| t.ideal_bits(i)).sum();
    Ok((rc_encode(&idx, &tables)?, bits))
}

pub fn decode_level(bytes: &[u8], shape: [usize; 3], dist: &SymbolDistribution, bound: i32) -> Result<QuantizedLevel> {
    let n: usize = shape.iter().product();
    if dist.mu.len() != n {
        return Err(Error::shape("decode_level", format!("{} distributions for shape {shape:?}", dist.mu.len())));
    }
    let idx = rc_decode(bytes, &symbol_tables(dist, bound))?;
    Ok(QuantizedLevel { shape, symbols: idx.into_iter().map(|i| i as i32 - bound).collect() })
}
