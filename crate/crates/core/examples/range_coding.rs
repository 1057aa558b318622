// Range-code symbols drawn from discretized Gaussians and compare the
// coded length with the ideal length under the same quantized tables.
//
// cargo run --release --example range_coding

use codecsplat::coder::{rc_decode, rc_encode, CdfTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RangeCodingSummary {
    pub symbols: usize,
    pub coded_bytes: usize,
    pub ideal_bytes: f64,
}

pub fn run_example() -> codecsplat::Result<RangeCodingSummary> {
    let bound = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 20_000;
    let mut tables = Vec::with_capacity(n);
    let mut symbols = Vec::with_capacity(n);
    for _ in 0..n {
        let mu: f64 = rng.random_range(-3.0..3.0);
        let sigma: f64 = rng.random_range(0.2..4.0);
        let table = CdfTable::gaussian(mu, sigma, bound);
        // sample through the table itself so the source matches the model
        let u = rng.random_range(0..1u32 << 16);
        symbols.push(table.find(u));
        tables.push(table);
    }
    let bytes = rc_encode(&symbols, &tables)?;
    let back = rc_decode(&bytes, &tables)?;
    assert_eq!(back, symbols, "range coder must be lossless");
    let ideal_bits: f64 = symbols.iter().zip(&tables).map(|(&s, t)| t.ideal_bits(s)).sum();
    let summary = RangeCodingSummary { symbols: n, coded_bytes: bytes.len(), ideal_bytes: ideal_bits / 8.0 };
    println!(
        "{} symbols: {} bytes coded, {:.1} bytes ideal ({:+.3}%)",
        summary.symbols,
        summary.coded_bytes,
        summary.ideal_bytes,
        100.0 * (summary.coded_bytes as f64 / summary.ideal_bytes - 1.0)
    );
    Ok(summary)
}

#[allow(dead_code)]
fn main() -> codecsplat::Result<()> {
    run_example().map(|_| ())
}
