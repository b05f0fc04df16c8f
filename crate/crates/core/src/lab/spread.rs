use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{closeness_bound, empirical_measure_from, measure_distance, MeasureSource};
use crate::error::{ForgeError, Result};
use crate::hierarchy::FamilyLevel;
use crate::params;
use crate::report::Check;
use crate::schedule::UeLevel;
use crate::symbolic::{block_from_index, concat_refs, occurrence_counts, Block};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqSpread {
    pub n: usize,
    /// `max_D max_{B,B'} |freq(B, D) - freq(B', D)|`.
    pub spread: f64,
    /// The short block, as digits.
    pub worst_d: String,
    /// Family indices attaining the spread at `worst_d`.
    pub worst_pair: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Largest pairwise frequency difference, computed as max minus min per `D`.
pub fn freq_spread(level: &FamilyLevel, n: usize) -> Result<FreqSpread> {
    if level.is_empty() {
        return Err(ForgeError::invalid(format!("level {} has no blocks", level.k)));
    }
    if n == 0 || n > level.length {
        return Err(ForgeError::invalid(format!(
            "short length {n} must lie in 1..={}",
            level.length
        )));
    }
    let counts = level
        .blocks
        .par_iter()
        .map(|b| occurrence_counts(b, n))
        .collect::<Result<Vec<_>>>()?;
    let mut best = (0u32, 0usize, (0usize, 0usize));
    for d in 0..counts[0].len() {
        let (mut lo, mut hi) = ((u32::MAX, 0), (0u32, 0));
        for (i, c) in counts.iter().enumerate() {
            if c[d] < lo.0 {
                lo = (c[d], i);
            }
            if c[d] > hi.0 || i == 0 {
                hi = (c[d], i);
            }
        }
        if hi.0 - lo.0 > best.0 {
            best = (hi.0 - lo.0, d, (hi.1, lo.1));
        }
    }
    Ok(FreqSpread {
        n,
        spread: best.0 as f64 / level.length as f64,
        worst_d: block_from_index(best.1, n, level.alphabet).to_digits(),
        worst_pair: best.2,
        note: (level.len() == 1).then(|| "a single block has no spread".to_string()),
    })
}

/// A finite piece of a point of the subshift: iid family blocks, shifted by
/// a uniform offset in `[0, N_k)`.
pub fn sample_point(level: &FamilyLevel, length: usize, seed: u64) -> Result<Block> {
    Ok(sample_point_with_offset(level, length, seed)?.0)
}

pub fn sample_point_with_offset(level: &FamilyLevel, length: usize, seed: u64) -> Result<(Block, usize)> {
    if level.is_empty() {
        return Err(ForgeError::invalid(format!("level {} has no blocks", level.k)));
    }
    if length < level.length {
        return Err(ForgeError::invalid(format!(
            "a sample point needs length at least N_k = {}",
            level.length
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0..level.length);
    let count = (offset + length).div_ceil(level.length);
    let picks: Vec<&Block> = (0..count)
        .map(|_| &level.blocks[rng.gen_range(0..level.len())])
        .collect();
    let full = concat_refs(picks.into_iter(), level.alphabet)?;
    Ok((full.slice(offset, length)?, offset))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiameterReport {
    pub k: u32,
    pub j: u32,
    pub r: f64,
    pub n: usize,
    pub theta: f64,
    pub samples: usize,
    pub point_length: usize,
    pub seed: u64,
    /// Largest truncated distance between two sampled points.
    pub diameter: f64,
    pub tail_bound: f64,
    pub worst_pair: (usize, usize),
    pub spread: FreqSpread,
    /// Sup-difference bound between two point measures built from the
    /// family spread and the junction and boundary slack.
    pub theta_measured: f64,
    pub checks: Vec<Check>,
}

/// Points per sample, in units of `N_k`.
pub const POINT_BLOCKS: usize = 64;

/// Estimates the diameter of the measures supported on a Bernstein level
/// from `samples` sampled points. This is an estimate from finitely many
/// points, never the true diameter.
pub fn diameter_report(
    level: &FamilyLevel,
    ue: &UeLevel,
    reference_len: usize,
    samples: usize,
    seed: u64,
) -> Result<DiameterReport> {
    if samples < 2 {
        return Err(ForgeError::invalid("the diameter needs at least two sample points"));
    }
    if ue.n > level.length {
        return Err(ForgeError::invalid("short length exceeds the block length"));
    }
    let len = POINT_BLOCKS * level.length;
    let measures = (0..samples)
        .into_par_iter()
        .map(|i| {
            let point = sample_point(level, len, point_seed(seed, i))?;
            empirical_measure_from(&point, ue.n, MeasureSource::SampledOrbit)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut diameter = 0.0;
    let mut worst_pair = (0, 0);
    let mut tail_bound = 0.0;
    for a in 0..samples {
        for b in a + 1..samples {
            let d = measure_distance(&measures[a], &measures[b], ue.n)?;
            tail_bound = d.tail_bound;
            if d.value > diameter {
                diameter = d.value;
                worst_pair = (a, b);
            }
        }
    }

    let spreads = (1..=ue.n).map(|n| freq_spread(level, n)).collect::<Result<Vec<_>>>()?;
    let nk = level.length as f64;
    let lf = len as f64;
    let theta_measured = spreads
        .iter()
        .map(|s| s.spread + (4.0 * nk + (lf / nk + 1.0) * (s.n as f64 - 1.0)) / lf)
        .fold(0.0, f64::max);
    let spread = spreads.last().cloned().expect("n >= 1");

    let base = params! {"k" => level.k, "j" => ue.j, "n" => ue.n, "samples" => samples};
    let mut checks = Vec::new();
    let total = diameter + tail_bound;
    checks.push(
        Check::new("diameter", base.clone(), total, ue.r, total < ue.r)
            .with_slack(ue.r - total)
            .with_note("truncated distance plus the tail bound"),
    );
    let contract = closeness_bound(level.alphabet, ue.n, theta_measured);
    checks.push(
        Check::new("closeness_measured", base.clone(), total, contract, total <= contract)
            .with_slack(contract - total)
            .with_note("N^n theta_measured + 2^(1-n)"),
    );
    let slack = ue.n as f64 / reference_len as f64;
    checks.push(
        Check::new(
            "freq_spread",
            base.clone(),
            spread.spread,
            ue.theta + 2.0 * slack,
            spread.spread <= ue.theta + 2.0 * slack,
        )
        .with_slack(slack)
        .with_note("theta plus twice the n/N_p boundary slack"),
    );
    // Without the occurrences that straddle two components, each block is
    // within sqrt(8 beta) of the mean; those add at most (n - 1)/N_p.
    let tight = 2.0 * ue.threshold() + (ue.n as f64 - 1.0) / reference_len as f64;
    checks.push(
        Check::new(
            "freq_spread_tight",
            base.clone(),
            spread.spread,
            tight,
            spread.spread <= tight,
        )
        .with_note("2 sqrt(8 beta) + (n-1)/N_p"),
    );
    checks.push(
        Check::new(
            "freq_spread_raw",
            base,
            spread.spread,
            ue.theta,
            spread.spread <= ue.theta,
        )
        .gating(false)
        .with_note("spread against theta without slack"),
    );
    Ok(DiameterReport {
        k: level.k,
        j: ue.j,
        r: ue.r,
        n: ue.n,
        theta: ue.theta,
        samples,
        point_length: len,
        seed,
        diameter,
        tail_bound,
        worst_pair,
        spread,
        theta_measured,
        checks,
    })
}

pub(crate) fn point_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
