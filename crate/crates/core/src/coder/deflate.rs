use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

/// Raw Deflate (RFC 1951) at the highest compression level.
pub fn deflate(bytes: &[u8]) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

pub fn inflate(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    DeflateDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| Error::Deflate(e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_zero_payload() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data = vec![0u8; 5000];
        rng.fill_bytes(&mut data);
        assert_eq!(inflate(&deflate(&data)).unwrap(), data);
        assert!(deflate(&[0u8; 1024]).len() < 64);
    }

    #[test]
    fn incompressible_payload_has_bounded_overhead() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in [1000usize, 70_000, 300_000] {
            let mut data = vec![0u8; n];
            rng.fill_bytes(&mut data);
            let c = deflate(&data);
            assert!((c.len() as f64) < n as f64 * 1.001 + 16.0, "{n} -> {}", c.len());
        }
    }

    #[test]
    fn malformed_payload_is_rejected() {
        assert!(matches!(inflate(&[0xff, 0xff, 0xff, 0x00]), Err(Error::Deflate(_))));
    }
}
