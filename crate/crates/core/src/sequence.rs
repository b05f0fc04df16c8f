//! Bounded test sequences with zero averages along arithmetic progressions.
//!
//! Indexing is 1-based throughout: `get(1)` is the first term. Internally the
//! values live in a 0-based `Vec`, but nothing outside this module sees that.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceSource {
    Mobius,
    File {
        path: PathBuf,
    },
    Synthetic {
        seed: u64,
    },
    /// Built from other data, e.g. the coded image of a point.
    Derived {
        from: String,
    },
}

/// A real sequence `y_1, y_2, ...` with `|y_i| <= 1`.
#[derive(Clone, Debug)]
pub struct TestSequence {
    values: Vec<f64>,
    source: SequenceSource,
}

impl TestSequence {
    pub fn new(values: Vec<f64>, source: SequenceSource) -> Result<Self> {
        if values.is_empty() {
            return Err(ForgeError::invalid("a test sequence needs at least one value"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > 1.0) {
            return Err(ForgeError::invalid(format!(
                "value {v} at index {} lies outside [-1, 1]",
                i + 1
            )));
        }
        Ok(TestSequence { values, source })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source(&self) -> &SequenceSource {
        &self.source
    }

    /// `y_i`, 1-based.
    pub fn get(&self, i: usize) -> Option<f64> {
        i.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    /// `y_j, ..., y_{j+len-1}`.
    pub fn window(&self, j: usize, len: usize) -> Result<&[f64]> {
        let start = j
            .checked_sub(1)
            .ok_or_else(|| ForgeError::invalid("sequence windows start at index 1"))?;
        let end = start + len;
        if end > self.values.len() {
            return Err(ForgeError::SequenceTooShort {
                required: end,
                available: self.values.len(),
            });
        }
        Ok(&self.values[start..end])
    }

    /// The values in order; element 0 is `y_1`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when every term is exactly -1, 0 or 1.
    pub fn is_ternary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0)
    }

    pub fn truncated(&self, len: usize) -> Result<TestSequence> {
        if len == 0 || len > self.values.len() {
            return Err(ForgeError::invalid(format!(
                "cannot truncate a sequence of length {} to {len}",
                self.values.len()
            )));
        }
        Ok(TestSequence {
            values: self.values[..len].to_vec(),
            source: self.source.clone(),
        })
    }

    /// One value per line, the format [`load_sequence`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 3);
        for v in &self.values {
            if v.fract() == 0.0 {
                let _ = writeln!(out, "{}", *v as i64);
            } else {
                let _ = writeln!(out, "{v}");
            }
        }
        out
    }
}

/// Smallest-prime-factor sieve; returns `mu[0..=n_max]` with `mu[0] = 0`.
pub fn mobius_table(n_max: usize) -> Vec<i8> {
    let mut mu = vec![0i8; n_max + 1];
    if n_max == 0 {
        return mu;
    }
    mu[1] = 1;
    let mut spf = vec![0u32; n_max + 1];
    let mut primes: Vec<u32> = Vec::new();
    for i in 2..=n_max {
        if spf[i] == 0 {
            spf[i] = i as u32;
            mu[i] = -1;
            primes.push(i as u32);
        }
        let lp = spf[i];
        for &p in &primes {
            let ip = i * p as usize;
            if p > lp || ip > n_max {
                break;
            }
            spf[ip] = p;
            mu[ip] = if p == lp { 0 } else { -mu[i] };
        }
    }
    mu
}

/// The Möbius function `mu(1), ..., mu(n_max)`.
pub fn mobius(n_max: usize) -> Result<TestSequence> {
    if n_max == 0 {
        return Err(ForgeError::invalid("mobius needs n_max >= 1"));
    }
    let values = mobius_table(n_max)[1..].iter().map(|&v| v as f64).collect();
    TestSequence::new(values, SequenceSource::Mobius)
}

/// Largest `n` with `n*t + l <= len`.
pub fn max_admissible_n(y: &TestSequence, t: usize, l: usize) -> usize {
    if t == 0 {
        return 0;
    }
    y.len().saturating_sub(l) / t
}

/// `(1/n) * sum_{i=1..n} y_{i*t + l}`.
pub fn ap_average(y: &TestSequence, t: usize, l: usize, n: usize) -> Result<f64> {
    if t == 0 || n == 0 {
        return Err(ForgeError::invalid("ap_average needs t >= 1 and n >= 1"));
    }
    let max_n = max_admissible_n(y, t, l);
    if n > max_n {
        return Err(ForgeError::IndexOverflow {
            requested: n,
            max_admissible: max_n,
        });
    }
    let v = y.values();
    let sum: f64 = (1..=n).map(|i| v[i * t + l - 1]).sum();
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApEntry {
    pub t: usize,
    pub l: usize,
    pub n: usize,
    pub average: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AperiodicityReport {
    pub t_max: usize,
    pub tol: f64,
    pub entries: Vec<ApEntry>,
    pub max_abs_average: f64,
    pub worst: (usize, usize),
    pub note: String,
}

impl AperiodicityReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ApEntry> {
        self.entries.iter().filter(|e| e.flagged)
    }
}

const FINITE_SCREEN_NOTE: &str = "finite screen: a flag falsifies zero progression averages \
at this length; the absence of flags proves nothing about the limit";

/// Evaluates every progression `t <= t_max`, `0 <= l < t` at its largest admissible `n`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn verify_aperiodic(y: &TestSequence, t_max: usize, tol: f64) -> Result<AperiodicityReport> {
    // Negated so that a NaN tolerance is rejected.
    if t_max == 0 || !(tol > 0.0) {
        return Err(ForgeError::invalid("verify_aperiodic needs t_max >= 1 and tol > 0"));
    }
    let pairs: Vec<(usize, usize)> = (1..=t_max).flat_map(|t| (0..t).map(move |l| (t, l))).collect();
    let entries = pairs
        .par_iter()
        .map(|&(t, l)| {
            let n = max_admissible_n(y, t, l);
            let average = ap_average(y, t, l, n)?;
            Ok(ApEntry {
                t,
                l,
                n,
                average,
                flagged: average.abs() > tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = entries
        .iter()
        .max_by(|a, b| a.average.abs().total_cmp(&b.average.abs()))
        .expect("t_max >= 1 gives at least one entry");
    Ok(AperiodicityReport {
        t_max,
        tol,
        max_abs_average: worst.average.abs(),
        worst: (worst.t, worst.l),
        entries,
        note: FINITE_SCREEN_NOTE.to_string(),
    })
}

/// Parses one real per line; blank lines are not allowed.
pub fn parse_sequence(text: &str, origin: &Path) -> Result<TestSequence> {
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ForgeError::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let trimmed = raw.trim();
        let v: f64 = trimmed
            .parse()
            .map_err(|_| err(format!("cannot parse {trimmed:?} as a real number")))?;
        if !v.is_finite() || v.abs() > 1.0 {
            return Err(err(format!("value {v} lies outside [-1, 1]")));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(ForgeError::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: "empty sequence file".into(),
        });
    }
    TestSequence::new(
        values,
        SequenceSource::File {
            path: origin.to_path_buf(),
        },
    )
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<TestSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
    parse_sequence(&text, path)
}

/// Seeded iid uniform ±1 values.
///
/// Such a sequence is aperiodic only almost surely; screen it with
/// [`verify_aperiodic`] before relying on it.
pub fn synthetic_pm1(seed: u64, n: usize) -> Result<TestSequence> {
    if n == 0 {
        return Err(ForgeError::invalid("synthetic_pm1 needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    TestSequence::new(values, SequenceSource::Synthetic { seed })
}
