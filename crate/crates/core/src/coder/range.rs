//! Byte-oriented range coder with 64-bit low state and carry propagation.

use crate::error::{Error, Result};

use super::cdf::{CdfTable, PROB_BITS};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, table: &CdfTable, symbol: usize) {
        let r = self.range >> PROB_BITS;
        self.low += r as u64 * table.start(symbol) as u64;
        self.range = r * table.frequency(symbol);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(Error::Truncated {
                what: "range-coded stream",
                expected: 5,
                actual: bytes.len(),
            });
        }
        if bytes[0] != 0 {
            return Err(Error::Corrupt { position: 0, detail: "first byte of a range-coded stream must be zero".into() });
        }
        let code = bytes[1..5].iter().fold(0u32, |c, &b| (c << 8) | b as u32);
        Ok(Self { bytes, pos: 5, code, range: u32::MAX })
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<usize> {
        let r = self.range >> PROB_BITS;
        let value = self.code / r;
        if value >= 1 << PROB_BITS {
            return Err(Error::Corrupt {
                position: self.pos,
                detail: format!("code value {value} outside the probability range"),
            });
        }
        let s = table.find(value);
        self.code -= r * table.start(s);
        self.range = r * table.frequency(s);
        while self.range < TOP {
            let Some(&b) = self.bytes.get(self.pos) else {
                return Err(Error::Corrupt { position: self.pos, detail: "read past the end of the stream".into() });
            };
            self.pos += 1;
            self.range <<= 8;
            self.code = (self.code << 8) | b as u32;
        }
        Ok(s)
    }

    /// Fails when bytes remain unread.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt {
                position: self.pos,
                detail: format!("{} trailing bytes after the last symbol", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

/// Encode symbol indices, each with its own table.
pub fn rc_encode(symbols: &[usize], tables: &[CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::shape("rc_encode", format!("{} symbols vs {} tables", symbols.len(), tables.len())));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        if s >= t.alphabet_size() {
            return Err(Error::Symbol { symbol: s as i32, alphabet: t.alphabet_size() });
        }
        enc.encode(t, s);
    }
    Ok(enc.finish())
}

/// Decode `tables.len()` symbols, requiring the stream to be consumed exactly.
pub fn rc_decode(bytes: &[u8], tables: &[CdfTable]) -> Result<Vec<usize>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let out = tables.iter().map(|t| dec.decode(t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}
