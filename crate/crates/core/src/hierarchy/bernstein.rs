use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FamilyLevel;
use crate::error::{ForgeError, Result};
use crate::symbolic::{occurrence_counts, Block};

/// Mean short-block frequencies over a reference family `G'_p`.
///
/// All statistics are kept as integer occurrence counts. A deviation is
/// `|S |G| - T q| / (q |G| N_p)` with `S` the count summed over the `q`
/// components and `T` the count summed over the family, divided once.
pub struct BernsteinStats {
    pub p: u32,
    pub n: usize,
    pub medium_len: usize,
    pub family_size: usize,
    /// Indexed by the base-N value of `D`.
    pub xbar: Vec<f64>,
    pub threshold: f64,
    totals: Vec<u64>,
    counts: Vec<Vec<u32>>,
    index: HashMap<Block, usize>,
}

/// Builds the statistics of `X_D(b) = freq(b, D)` on `G'_p`.
pub fn bernstein_stats(reference: &FamilyLevel, n: usize, threshold: f64) -> Result<BernsteinStats> {
    if reference.is_empty() {
        return Err(ForgeError::invalid("the reference family is empty"));
    }
    if n == 0 || n > reference.length {
        return Err(ForgeError::invalid(format!(
            "short length {n} must lie in 1..={}",
            reference.length
        )));
    }
    let counts = reference
        .blocks
        .iter()
        .map(|b| occurrence_counts(b, n))
        .collect::<Result<Vec<_>>>()?;
    let mut totals = vec![0u64; counts[0].len()];
    for c in &counts {
        for (t, &x) in totals.iter_mut().zip(c) {
            *t += x as u64;
        }
    }
    let g = reference.len();
    let denom = (g * reference.length) as f64;
    let xbar = totals.iter().map(|&t| t as f64 / denom).collect();
    let index = reference
        .blocks
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    Ok(BernsteinStats {
        p: reference.k,
        n,
        medium_len: reference.length,
        family_size: g,
        xbar,
        threshold,
        totals,
        counts,
        index,
    })
}

impl BernsteinStats {
    pub fn shorts(&self) -> usize {
        self.totals.len()
    }

    /// Indices in `G'_p` of the consecutive length-`N_p` pieces of `b`.
    pub fn decompose(&self, b: &Block) -> Result<Vec<usize>> {
        if !b.len().is_multiple_of(self.medium_len) {
            return Err(ForgeError::invalid(format!(
                "a block of length {} is not a tuple of length-{} blocks",
                b.len(),
                self.medium_len
            )));
        }
        b.split(self.medium_len)?
            .iter()
            .enumerate()
            .map(|(i, piece)| {
                self.index.get(piece).copied().ok_or_else(|| {
                    ForgeError::invalid(format!(
                        "component {} ({piece}) is not in the reference family G'_{}",
                        i + 1,
                        self.p
                    ))
                })
            })
            .collect()
    }

    /// `max_D |(1/q) sum_i freq(b_i, D) - xbar[D]|` for the tuple `idx`.
    pub fn deviation_of(&self, idx: &[usize]) -> f64 {
        self.deviations_of(idx).into_iter().fold(0.0, f64::max)
    }

    pub fn deviations_of(&self, idx: &[usize]) -> Vec<f64> {
        let q = idx.len() as i128;
        let g = self.family_size as i128;
        let denom = (q * g * self.medium_len as i128) as f64;
        (0..self.shorts())
            .map(|d| {
                let s: i128 = idx.iter().map(|&i| self.counts[i][d] as i128).sum();
                let num = (s * g - self.totals[d] as i128 * q).abs();
                num as f64 / denom
            })
            .collect()
    }

    pub fn deviation(&self, b: &Block) -> Result<f64> {
        Ok(self.deviation_of(&self.decompose(b)?))
    }

    /// Passes on equality with the threshold.
    pub fn passes(&self, b: &Block) -> Result<bool> {
        Ok(self.deviation(b)? <= self.threshold)
    }
}

/// Test (F) on `b`, read as a tuple of `G'_p` blocks.
pub fn bernstein_test(b: &Block, stats: &BernsteinStats) -> Result<bool> {
    stats.passes(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub q: usize,
    pub beta: f64,
    pub threshold: f64,
    /// Base-N index of the fixed short block, or `None` for "some D".
    pub short: Option<usize>,
    pub trials: u64,
    pub failures: u64,
    pub rate: f64,
    /// `2 exp(-2 q beta)`.
    pub bound: f64,
    /// Binomial standard error at the bound, `sqrt(b (1 - b) / trials)`.
    pub sigma: f64,
    pub holds: bool,
}

/// Draws `q` iid blocks from `G'_p` per trial and counts deviations above
/// `sqrt(8 beta)`, either for one short block or for any.
pub fn iid_trials(
    stats: &BernsteinStats,
    q: usize,
    beta: f64,
    short: Option<usize>,
    trials: u64,
    seed: u64,
) -> Result<TrialReport> {
    if q == 0 || trials == 0 {
        return Err(ForgeError::invalid("q and the trial count must be positive"));
    }
    if let Some(d) = short {
        if d >= stats.shorts() {
            return Err(ForgeError::invalid(format!("short block index {d} out of range")));
        }
    }
    let threshold = (8.0 * beta).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; q];
    let mut failures = 0u64;
    for _ in 0..trials {
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..stats.family_size);
        }
        let dev = match short {
            Some(d) => stats.deviations_of(&idx)[d],
            None => stats.deviation_of(&idx),
        };
        if dev > threshold {
            failures += 1;
        }
    }
    let bound = 2.0 * (-2.0 * q as f64 * beta).exp();
    let b = bound.min(1.0);
    let sigma = (b * (1.0 - b) / trials as f64).sqrt();
    let rate = failures as f64 / trials as f64;
    Ok(TrialReport {
        q,
        beta,
        threshold,
        short,
        trials,
        failures,
        rate,
        bound,
        sigma,
        holds: rate <= bound + 3.0 * sigma,
    })
}
