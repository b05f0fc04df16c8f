//! Block families `G_0 = Λ, G_1, G_2, ...`, each level built from
//! concatenations of `m_k` blocks of the previous one.

mod bernstein;
mod builder;
mod chain;
mod correlation;
pub mod naive;

pub use bernstein::{bernstein_stats, bernstein_test, iid_trials, BernsteinStats, TrialReport};
pub use builder::{base_level, build_level, build_level_f, build_level_r, BATCH};
pub use chain::{check_gamma_chain, check_nesting, GammaChainReport};
pub use correlation::{correlation_test, required_length, CorrelationTest, Verdict};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::report::Inequality;
use crate::symbolic::Block;

/// Probability that a candidate passes, exact or estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gamma {
    Exact {
        passed: u64,
        total: u64,
    },
    /// `low..high` is the 95% Wilson interval.
    Sampled {
        passed: u64,
        draws: u64,
        low: f64,
        high: f64,
    },
}

impl Gamma {
    pub fn sampled(passed: u64, draws: u64) -> Gamma {
        let (low, high) = wilson_interval(passed, draws, 1.96);
        Gamma::Sampled {
            passed,
            draws,
            low,
            high,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Gamma::Exact { passed, total }
            | Gamma::Sampled {
                passed, draws: total, ..
            } => {
                if total == 0 {
                    0.0
                } else {
                    passed as f64 / total as f64
                }
            }
        }
    }

    pub fn ratio(&self) -> Option<Ratio<u64>> {
        match *self {
            Gamma::Exact { passed, total } if total > 0 => Some(Ratio::new(passed, total)),
            _ => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Gamma::Exact { .. })
    }

    pub fn passed(&self) -> u64 {
        match *self {
            Gamma::Exact { passed, .. } | Gamma::Sampled { passed, .. } => passed,
        }
    }

    pub fn tested(&self) -> u64 {
        match *self {
            Gamma::Exact { total, .. } => total,
            Gamma::Sampled { draws, .. } => draws,
        }
    }

    /// `(low, high)`; a point for exact values.
    pub fn interval(&self) -> (f64, f64) {
        match *self {
            Gamma::Exact { .. } => (self.value(), self.value()),
            Gamma::Sampled { low, high, .. } => (low, high),
        }
    }
}

pub fn wilson_interval(passed: u64, draws: u64, z: f64) -> (f64, f64) {
    if draws == 0 {
        return (0.0, 1.0);
    }
    let n = draws as f64;
    let p = passed as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BuildMode {
    /// Level 0, the alphabet itself.
    Base,
    Exhaustive,
    Sampled {
        cap: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    R,
    F,
}

/// What the Bernstein test did at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinRecord {
    pub j: u32,
    pub p: u32,
    pub n: usize,
    pub q: u64,
    pub beta: f64,
    pub threshold: f64,
    /// Passing probability of the correlation test alone.
    pub gamma_bar: Gamma,
    /// `ln #Ḡ_k` in the uncapped construction.
    pub log_count_bar: f64,
    /// Empirical `P(F | Ḡ_k)`.
    pub conditional_failure: f64,
    /// Empirical `P(F)` over iid tuples from `G'_p`.
    pub unconditional_failure: f64,
    pub unconditional_trials: u64,
    /// Largest deviation among blocks that passed (R).
    pub worst_deviation: f64,
    pub bounds: Vec<Inequality>,
}

/// One construction level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyLevel {
    pub k: u32,
    #[serde(rename = "N_k")]
    pub length: usize,
    #[serde(rename = "m_k")]
    pub multiplier: u32,
    pub alphabet: usize,
    pub parent_size: usize,
    pub eps_plus_delta: f64,
    pub code_window: usize,
    pub gamma: Gamma,
    /// `ln #G_k` in the uncapped construction: `m_k ln #G_{k-1} + ln gamma_k`.
    pub log_count: f64,
    pub tests: Vec<TestKind>,
    pub mode: BuildMode,
    /// Largest `|corr|` over stored blocks, windows and codes.
    pub worst_correlation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bernstein: Option<BernsteinRecord>,
    #[serde(skip)]
    pub blocks: Vec<Block>,
}

impl FamilyLevel {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `h(Σ_k) = ln #G_k / N_k`.
    pub fn entropy(&self) -> f64 {
        self.log_count / self.length as f64
    }

    pub fn has_test(&self, t: TestKind) -> bool {
        self.tests.contains(&t)
    }
}
