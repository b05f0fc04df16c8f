use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{FamilyLevel, TestKind};
use crate::params;
use crate::report::{Check, Inequality};
use crate::schedule::{gamma_lower_bound, verify_a_prime, APrimeReport, JumpRule, Mode, Schedule};
use crate::symbolic::Block;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaChainReport {
    pub entries: Vec<Inequality>,
    pub a_prime: Vec<APrimeReport>,
    /// Every recorded gamma (including `γ̄_k`) is at least 1/2.
    pub all_above_half: bool,
    /// Some gamma is a sampled estimate.
    pub estimated: bool,
}

/// The lower bounds on `γ_k`, `γ̄_k`, `γ'_k` and the sum condition (A').
///
/// These are the construction's inequalities evaluated on measured probabilities;
/// they gate only in faithful mode.
pub fn check_gamma_chain(levels: &[FamilyLevel], s: &Schedule) -> GammaChainReport {
    let gating = s.mode == Mode::Faithful;
    let mut entries = Vec::new();
    let gammas: BTreeMap<u32, f64> = levels
        .iter()
        .filter(|l| l.k > 0)
        .map(|l| (l.k, l.gamma.value()))
        .collect();
    let mut all_above_half = true;
    let mut estimated = false;

    for level in levels.iter().filter(|l| l.k > 0) {
        let k = level.k;
        let g = level.gamma.value();
        estimated |= !level.gamma.is_exact();
        all_above_half &= g >= 0.5;
        let m = s.multiplier(k);
        let a = s.alpha.at(m);
        let e = b_prime_pow(k) - b_pow(k);
        match &level.bernstein {
            None => {
                entries.push(gamma_lower_bound("c", s, k, g, JumpRule::B).gating(gating));
                entries.push(gamma_lower_bound("c_prime", s, k, g, JumpRule::BPrime).gating(gating));
            }
            Some(b) => {
                let gb = b.gamma_bar.value();
                all_above_half &= gb >= 0.5;
                entries.push(gamma_lower_bound("c_bar", s, k, gb, JumpRule::B).gating(gating));
                entries.push(gamma_lower_bound("c_prime", s, k, g, JumpRule::BPrime).gating(gating));
                let base = params! {"k" => k, "m_k" => m};
                entries.push(
                    Inequality::less("conditional_failure_vs_e", base.clone(), b.conditional_failure, a * e)
                        .gating(gating),
                );
                let product = (1.0 - a * b_pow(k)) * (1.0 - a * e);
                entries.push(Inequality::greater("gamma_prime_product", base.clone(), g, product).gating(gating));
                entries.push(
                    Inequality::greater(
                        "product_dominates_c_prime",
                        base.clone(),
                        product,
                        1.0 - a * b_prime_pow(k),
                    )
                    .gating(gating),
                );
                let factored = gb * (1.0 - b.conditional_failure);
                entries.push(
                    Inequality::new(
                        "gamma_prime_factorisation",
                        base,
                        g,
                        factored,
                        (g - factored).abs() <= 1e-12,
                    )
                    .gating(true),
                );
                entries.extend(b.bounds.iter().cloned().map(|i| i.gating(gating)));
            }
        }
    }

    let a_prime = levels
        .iter()
        .filter(|l| l.k > 0)
        .filter_map(|l| verify_a_prime(s, &gammas, l.k).ok())
        .collect::<Vec<_>>();
    for r in &a_prime {
        entries.push(Inequality::less("a_prime", params! {"k" => r.k}, r.sum, r.bound).gating(gating));
    }
    GammaChainReport {
        entries,
        a_prime,
        all_above_half,
        estimated,
    }
}

fn b_pow(k: u32) -> f64 {
    JumpRule::B.base().powi(k as i32 - 1)
}

fn b_prime_pow(k: u32) -> f64 {
    JumpRule::BPrime.base().powi(k as i32 - 1)
}

/// Cuts every block of level `k` at multiples of `N_s` and checks that the
/// pieces are level-`s` blocks, for `s = k - 1` and `s = p_k`.
pub fn check_nesting(levels: &[FamilyLevel], k: u32, s: &Schedule) -> Vec<Check> {
    let Some(level) = levels.get(k as usize) else {
        return Vec::new();
    };
    let mut targets = vec![k.saturating_sub(1)];
    let p = s.ue_at(k).map_or(s.reference_index(k), |u| u.p);
    if p < k.saturating_sub(1) {
        targets.push(p);
    }
    targets
        .into_iter()
        .filter_map(|t| levels.get(t as usize))
        .map(|lower| {
            let set: HashSet<&Block> = lower.blocks.iter().collect();
            let bad = level
                .blocks
                .iter()
                .filter(|b| match b.split(lower.length) {
                    Ok(pieces) => pieces.iter().any(|piece| !set.contains(piece)),
                    Err(_) => true,
                })
                .count();
            Check::new("nesting", params! {"k" => k, "s" => lower.k}, bad as f64, 0.0, bad == 0)
                .with_note("blocks whose pieces are not all level-s blocks")
        })
        .collect()
}

impl FamilyLevel {
    pub fn is_bernstein(&self) -> bool {
        self.has_test(TestKind::F)
    }
}
