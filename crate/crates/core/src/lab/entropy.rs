use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::hierarchy::{BuildMode, FamilyLevel};
use crate::params;
use crate::report::Check;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyLevel {
    pub k: u32,
    #[serde(rename = "N_k")]
    pub length: usize,
    /// `ln #G_k / N_k` from the recorded count.
    pub h: f64,
    /// `ln N + sum_{i <= k} ln(gamma_i) / N_i`.
    pub telescoped: f64,
    /// `ln(stored blocks) / N_k`, equal to `h` when every level up to `k` was enumerated.
    pub h_stored: f64,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub levels: Vec<EntropyLevel>,
    /// `ln N - ln 2 / (M - 1)`.
    pub lower_bound: f64,
    pub checks: Vec<Check>,
}

const IDENTITY_TOL: f64 = 1e-12;

/// Level entropies, the telescoping identity, the lower bound and (ent2).
///
/// `levels[0]` must be the base level. The identity is asserted only where
/// counts are exact; elsewhere it is recorded as a non-gating estimate.
pub fn entropy_report(levels: &[FamilyLevel], big_m: u32) -> Result<EntropyReport> {
    let base = levels
        .first()
        .filter(|l| l.k == 0)
        .ok_or_else(|| ForgeError::invalid("the entropy report needs level 0 first"))?;
    if big_m < 2 {
        return Err(ForgeError::invalid("M must be at least 2"));
    }
    let ln_n = (base.alphabet as f64).ln();
    let lower_bound = ln_n - std::f64::consts::LN_2 / (big_m - 1) as f64;
    let mut out = Vec::new();
    let mut checks = Vec::new();
    let mut telescoped = ln_n;
    let mut exact = true;
    for l in levels {
        if l.k > 0 {
            telescoped += l.gamma.value().ln() / l.length as f64;
        }
        exact &= matches!(l.mode, BuildMode::Base | BuildMode::Exhaustive);
        let h = l.entropy();
        let h_stored = (l.len() as f64).ln() / l.length as f64;
        // With exact counts the stored family is the whole of G_k, which
        // makes the comparison independent of the recorded gammas.
        let reference = if exact { h_stored } else { h };
        let rel = (reference - telescoped).abs() / reference.abs().max(f64::MIN_POSITIVE);
        checks.push(
            Check::new(
                "entropy_identity",
                params! {"k" => l.k},
                rel,
                IDENTITY_TOL,
                !exact || rel <= IDENTITY_TOL,
            )
            .gating(exact)
            .with_note(if exact {
                "relative error against the enumerated count"
            } else {
                "estimate only: gamma is sampled at this or an earlier level"
            }),
        );
        out.push(EntropyLevel {
            k: l.k,
            length: l.length,
            h,
            telescoped,
            h_stored,
            exact,
        });
    }

    let all_half = levels
        .iter()
        .skip(1)
        .all(|l| l.gamma.value() >= 0.5 && l.bernstein.as_ref().is_none_or(|b| b.gamma_bar.value() >= 0.5));
    for e in &out {
        let holds = e.h >= lower_bound;
        checks.push(
            Check::new("entropy_lower_bound", params! {"k" => e.k}, e.h, lower_bound, holds)
                .with_slack(e.h - lower_bound)
                .gating(all_half)
                .with_note(if all_half {
                    "every gamma is at least 1/2"
                } else {
                    "some gamma is below 1/2, so the bound is not implied"
                }),
        );
    }

    for (pi, p) in levels.iter().enumerate().skip(1) {
        let bound = std::f64::consts::LN_2 / (p.length as f64 * (p.multiplier as f64 - 1.0));
        for k in levels.iter().skip(pi + 1) {
            let diff = out[pi].h - out[k.k as usize].h;
            checks.push(
                Check::new("ent2", params! {"p" => p.k, "k" => k.k}, diff, bound, diff < bound)
                    .with_slack(bound - diff)
                    .gating(all_half),
            );
            if let Some(b) = &k.bernstein {
                let h_bar = b.log_count_bar / k.length as f64;
                let diff = out[pi].h - h_bar;
                checks.push(
                    Check::new("ent2_bar", params! {"p" => p.k, "k" => k.k}, diff, bound, diff < bound)
                        .with_slack(bound - diff)
                        .gating(false)
                        .with_note("with the correlation-test count at the Bernstein level"),
                );
            }
        }
    }
    Ok(EntropyReport {
        levels: out,
        lower_bound,
        checks,
    })
}
