//! Plain re-implementations of the level tests, used to audit the builder.
//!
//! Nothing here shares code with the fast paths beyond the block and code
//! types: codes are evaluated window by window, correlations are summed in a
//! double loop, and frequencies come from exact rationals.

use std::collections::HashSet;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FamilyLevel, TestKind};
use crate::error::{ForgeError, Result};
use crate::schedule::Schedule;
use crate::sequence::TestSequence;
use crate::symbolic::{block_from_index, freq, Block, CodeFamily};

/// Test (R) by the double loop over `j` and window positions.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn correlation_passes(
    b: &Block,
    y: &TestSequence,
    codes: &CodeFamily,
    eps_plus_delta: f64,
    m: u32,
    n_k: usize,
) -> Result<bool> {
    if b.len() != n_k {
        return Err(ForgeError::invalid("block length differs from N_k"));
    }
    let bound = 2.0 * eps_plus_delta;
    let starts = (m as usize * m as usize - 1) * n_k;
    let yv = y.values();
    for f in &codes.codes {
        let w = f.window();
        let fb: Vec<f64> = (0..=n_k - w).map(|i| f.eval_at(b, i) as f64).collect();
        if yv.len() < starts + fb.len() - 1 {
            return Err(ForgeError::SequenceTooShort {
                required: starts + fb.len() - 1,
                available: yv.len(),
            });
        }
        // y_j is yv[j - 1].
        for j in 1..=starts {
            let window = &yv[j - 1..j - 1 + fb.len()];
            let mut sum = 0.0;
            for i in 0..fb.len() {
                sum += fb[i] * window[i];
            }
            let corr = sum / fb.len() as f64;
            // Written negated so that a NaN correlation fails.
            if !(corr.abs() < bound) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `max_D |(1/q) sum_i freq(b_i, D) - mean_b freq(b, D)|` in exact arithmetic.
pub fn bernstein_deviation(b: &Block, reference: &[Block], n: usize) -> Result<f64> {
    let np = reference
        .first()
        .ok_or_else(|| ForgeError::invalid("empty reference family"))?
        .len();
    if !b.len().is_multiple_of(np) {
        return Err(ForgeError::invalid("block is not a tuple of reference blocks"));
    }
    let q = b.len() / np;
    let mut parts = Vec::with_capacity(q);
    for i in 0..q {
        let piece = b.slice(i * np, np)?;
        if !reference.contains(&piece) {
            return Err(ForgeError::invalid(format!(
                "component {} is not a reference block",
                i + 1
            )));
        }
        parts.push(piece);
    }
    let to_i = |r: Ratio<u64>| Ratio::new(*r.numer() as i128, *r.denom() as i128);
    let shorts = b.alphabet_size().pow(n as u32);
    let mut worst = 0.0f64;
    for d in 0..shorts {
        let short = block_from_index(d, n, b.alphabet_size());
        let mut mean = Ratio::from_integer(0i128);
        for part in &parts {
            mean += to_i(freq(part, &short)?);
        }
        mean /= q as i128;
        let mut xbar = Ratio::from_integer(0i128);
        for r in reference {
            xbar += to_i(freq(r, &short)?);
        }
        xbar /= reference.len() as i128;
        let diff = mean - xbar;
        let dev = diff.numer().abs() as f64 / *diff.denom() as f64;
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverifyReport {
    pub k: u32,
    pub blocks: usize,
    /// `(block index, reason)`.
    pub failures: Vec<(usize, String)>,
    /// `#G_k = gamma (#G_{k-1})^{m_k}`, for exhaustive levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_identity: Option<bool>,
}

impl ReverifyReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty() && self.count_identity != Some(false)
    }
}

/// Re-checks every stored block of `level`: its length, that it is a
/// concatenation of `m_k` parent blocks, and each test the level applied.
pub fn reverify(
    level: &FamilyLevel,
    parent: &FamilyLevel,
    reference: Option<&FamilyLevel>,
    s: &Schedule,
    y: &TestSequence,
    codes: &CodeFamily,
) -> Result<ReverifyReport> {
    let k = level.k;
    let m = s.multiplier(k);
    let n_k = s
        .length(k)
        .ok_or_else(|| ForgeError::Capacity(format!("N_{k} overflows")))?;
    let eps = s.eps_plus_delta(k);
    let parents: HashSet<&Block> = parent.blocks.iter().collect();
    let ue = if level.has_test(TestKind::F) {
        let ue = s.ue_at(k).ok_or_else(|| {
            ForgeError::Verification(format!(
                "level {k} claims test (F) but no Bernstein level is scheduled there"
            ))
        })?;
        let r = reference.ok_or_else(|| ForgeError::invalid("test (F) needs the reference level"))?;
        Some((ue, r))
    } else {
        None
    };

    let failures: Vec<(usize, String)> = level
        .blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| -> Result<Option<(usize, String)>> {
            if b.len() != n_k || b.alphabet_size() != s.alphabet {
                return Ok(Some((i, format!("length {} instead of {n_k}", b.len()))));
            }
            let np = parent.length;
            for c in 0..m as usize {
                if !parents.contains(&b.slice(c * np, np)?) {
                    return Ok(Some((
                        i,
                        format!("component {} is not a level-{} block", c + 1, parent.k),
                    )));
                }
            }
            if !correlation_passes(b, y, codes, eps, m, n_k)? {
                return Ok(Some((i, "fails test (R)".into())));
            }
            if let Some((ue, r)) = ue {
                let dev = match bernstein_deviation(b, &r.blocks, ue.n) {
                    Ok(d) => d,
                    Err(e) => return Ok(Some((i, e.to_string()))),
                };
                if dev > ue.threshold() {
                    return Ok(Some((
                        i,
                        format!("fails test (F): deviation {dev} > {}", ue.threshold()),
                    )));
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut distinct: HashSet<&Block> = HashSet::new();
    let mut failures = failures;
    for (i, b) in level.blocks.iter().enumerate() {
        if !distinct.insert(b) {
            failures.push((i, "duplicate block".into()));
        }
    }

    let count_identity = level.gamma.ratio().map(|g| {
        let total = (parent.len() as u64).checked_pow(m);
        total == Some(level.gamma.tested()) && g * level.gamma.tested() == Ratio::from_integer(level.len() as u64)
    });
    Ok(ReverifyReport {
        k,
        blocks: level.len(),
        failures,
        count_identity,
    })
}
