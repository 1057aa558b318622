use codecsplat::coder::{rc_decode, rc_encode, CdfTable, PROB_TOTAL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `-log2(f / 2^16)` straight from the cumulative counts.
pub fn shannon_bits(symbols: &[usize], tables: &[CdfTable]) -> f64 {
    symbols
        .iter()
        .zip(tables)
        .map(|(&s, t)| {
            let c = t.cumulative();
            let f = (c[s + 1] - c[s]) as f64;
            -(f / PROB_TOTAL as f64).log2()
        })
        .sum()
}

pub fn sample(table: &CdfTable, rng: &mut ChaCha8Rng) -> usize {
    table.find(rng.random_range(0..PROB_TOTAL))
}

pub fn random_table(rng: &mut ChaCha8Rng) -> CdfTable {
    let a = rng.random_range(1..300usize);
    let probs: Vec<f64> = (0..a).map(|_| rng.random::<f64>().powi(4)).collect();
    CdfTable::from_probabilities(&probs)
}

/// Three 10^5-symbol sources: varied Gaussians, one narrow Gaussian, random
/// tables.
pub fn shannon_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for source in 0..3 {
        let tables: Vec<CdfTable> = (0..100_000)
            .map(|_| match source {
                0 => CdfTable::gaussian(rng.random_range(-2.0..2.0), rng.random_range(0.15..6.0), 64),
                1 => CdfTable::gaussian(0.0, 0.3, 64),
                _ => random_table(&mut rng),
            })
            .collect();
        let symbols: Vec<usize> = tables.iter().map(|t| sample(t, &mut rng)).collect();
        let bytes = rc_encode(&symbols, &tables).unwrap();
        let bound = shannon_bits(&symbols, &tables) / 8.0;
        let excess = bytes.len() as f64 - bound;
        assert!(excess <= 0.001 * bound + 16.0, "source {source}: {} bytes vs bound {bound:.1}", bytes.len());
        assert!(excess >= -1.0, "source {source}: below the entropy bound");
        assert_eq!(rc_decode(&bytes, &tables).unwrap(), symbols);
    }
}

/// Random tables and symbols, half drawn from the table and half uniform.
/// Returns the number of failed round trips.
pub fn fuzz_round_trips(count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failures = 0;
    for _ in 0..count {
        let n = rng.random_range(0..40);
        let tables: Vec<CdfTable> = (0..n).map(|_| random_table(&mut rng)).collect();
        let symbols: Vec<usize> = tables
            .iter()
            .map(|t| if rng.random_bool(0.5) { sample(t, &mut rng) } else { rng.random_range(0..t.alphabet_size()) })
            .collect();
        let ok = rc_encode(&symbols, &tables).and_then(|b| rc_decode(&b, &tables)).map(|d| d == symbols);
        if !matches!(ok, Ok(true)) {
            failures += 1;
        }
    }
    failures
}
