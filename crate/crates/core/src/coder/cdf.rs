use crate::error::{Error, Result};
use crate::tensors::normal_cdf;

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;

/// Beyond this many standard deviations the CDF is taken as exactly 0 or 1.
const TAIL_Z: f64 = 40.0;

/// Cumulative symbol counts summing to `2^16`, every symbol at least 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    cdf: Vec<u32>,
}

impl CdfTable {
    pub fn from_frequencies(freqs: &[u32]) -> Result<Self> {
        if freqs.is_empty() || freqs.contains(&0) {
            return Err(Error::Format("every symbol needs a count of at least 1".into()));
        }
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for &f in freqs {
            acc = acc
                .checked_add(f)
                .ok_or_else(|| Error::Format("frequency overflow".into()))?;
            cdf.push(acc);
        }
        if acc != PROB_TOTAL {
            return Err(Error::Format(format!("frequencies sum to {acc}, expected {PROB_TOTAL}")));
        }
        Ok(Self { cdf })
    }

    /// Quantize a probability vector: `1 + floor(p·(2^16 − A))` per symbol,
    /// the remaining counts going to the largest fractional parts (lower index
    /// first on ties).
    pub fn from_probabilities(probs: &[f64]) -> Self {
        let a = probs.len();
        assert!(a > 0 && a as u32 <= PROB_TOTAL, "alphabet size {a} outside 1..=2^16");
        let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
        let spare = (PROB_TOTAL - a as u32) as f64;
        let mut freqs = Vec::with_capacity(a);
        let mut fracs = Vec::with_capacity(a);
        for &p in probs {
            let scaled = if total > 0.0 { p.max(0.0) / total * spare } else { spare / a as f64 };
            let whole = scaled.floor().min(spare);
            freqs.push(1 + whole as u32);
            fracs.push(scaled - whole);
        }
        let used: u32 = freqs.iter().sum();
        let remainder = (PROB_TOTAL - used) as usize;
        if remainder > 0 {
            let mut order: Vec<usize> = (0..a).collect();
            let by_frac = |i: &usize, j: &usize| fracs[*j].total_cmp(&fracs[*i]).then(i.cmp(j));
            if remainder < a {
                order.select_nth_unstable_by(remainder, by_frac);
                order.truncate(remainder);
            }
            order.sort_unstable_by(by_frac);
            for &i in order.iter().cycle().take(remainder) {
                freqs[i] += 1;
            }
        }
        Self::from_frequencies(&freqs).expect("counts sum to 2^16 by construction")
    }

    /// Discretized `N(mu, sigma²)` over `[-bound, bound]`, tails merged into the end symbols.
    pub fn gaussian(mu: f64, sigma: f64, bound: i32) -> Self {
        let n = (2 * bound + 1) as usize;
        let mut probs = Vec::with_capacity(n);
        let cdf = |x: f64| -> f64 {
            let z = (x - mu) / sigma;
            if z < -TAIL_Z {
                0.0
            } else if z > TAIL_Z {
                1.0
            } else {
                normal_cdf(z)
            }
        };
        let mut prev = 0.0;
        for i in 0..n {
            let k = i as i32 - bound;
            let upper = if k == bound { 1.0 } else { cdf(k as f64 + 0.5) };
            probs.push((upper - prev).max(0.0));
            prev = upper;
        }
        Self::from_probabilities(&probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_probabilities(&vec![1.0; n])
    }

    pub fn alphabet_size(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn start(&self, s: usize) -> u32 {
        self.cdf[s]
    }

    pub fn frequency(&self, s: usize) -> u32 {
        self.cdf[s + 1] - self.cdf[s]
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cdf
    }

    /// Symbol whose interval contains `value < 2^16`.
    pub fn find(&self, value: u32) -> usize {
        self.cdf.partition_point(|&c| c <= value) - 1
    }

    /// `-log2(freq / 2^16)`.
    pub fn ideal_bits(&self, s: usize) -> f64 {
        PROB_BITS as f64 - (self.frequency(s) as f64).log2()
    }
}
