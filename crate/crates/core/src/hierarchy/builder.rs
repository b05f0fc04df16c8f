use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bernstein::{bernstein_stats, iid_trials, BernsteinStats};
use super::correlation::CorrelationTest;
use super::{BernsteinRecord, BuildMode, FamilyLevel, Gamma, TestKind};
use crate::error::{ForgeError, Result};
use crate::params;
use crate::report::Inequality;
use crate::schedule::{Caps, Schedule, UeLevel};
use crate::sequence::TestSequence;
use crate::symbolic::{concat_refs, Block, CodeFamily, CodeWindows};

/// Candidates evaluated per parallel batch. Results are consumed in
/// candidate order, so the outcome does not depend on the thread count.
pub const BATCH: usize = 1024;

/// Tuples drawn to estimate the unconditional failure rate of (F).
const UNCONDITIONAL_TRIALS: u64 = 4000;

/// Candidates given a full scan when a level ends up empty.
const DIAGNOSTIC_SCANS: usize = 64;

/// `G_0`: the one-symbol blocks.
pub fn base_level(alphabet: usize) -> Result<FamilyLevel> {
    let blocks = (0..alphabet)
        .map(|s| Block::symbol(s as u8, alphabet))
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilyLevel {
        k: 0,
        length: 1,
        multiplier: 1,
        alphabet,
        parent_size: 0,
        eps_plus_delta: 0.0,
        code_window: 0,
        gamma: Gamma::Exact {
            passed: alphabet as u64,
            total: alphabet as u64,
        },
        log_count: (alphabet as f64).ln(),
        tests: Vec::new(),
        mode: BuildMode::Base,
        worst_correlation: 0.0,
        bernstein: None,
        blocks,
    })
}

/// Builds level `levels.len()` from the levels below it, applying (F)
/// when the schedule puts a Bernstein level there.
pub fn build_level(
    levels: &[FamilyLevel],
    s: &Schedule,
    y: &TestSequence,
    windows: &CodeWindows,
    caps: &Caps,
    seed: u64,
) -> Result<FamilyLevel> {
    let k = levels.len() as u32;
    let Some(parent) = levels.last() else {
        return base_level(s.alphabet);
    };
    let codes = windows.family(s.alphabet, k)?;
    match s.ue_at(k) {
        Some(ue) => {
            let reference = levels
                .get(ue.p as usize)
                .ok_or_else(|| ForgeError::invalid(format!("reference level {} is not built", ue.p)))?;
            build_level_f(parent, reference, s, ue, y, &codes, caps, seed)
        }
        None => build_level_r(parent, s, y, &codes, caps, seed),
    }
}

/// `G_k`: concatenations of `m_k` parent blocks passing test (R).
pub fn build_level_r(
    parent: &FamilyLevel,
    s: &Schedule,
    y: &TestSequence,
    codes: &CodeFamily,
    caps: &Caps,
    seed: u64,
) -> Result<FamilyLevel> {
    build(parent, s, y, codes, caps, seed, None)
}

/// `G'_k`: test (R) gives `Ḡ_k`, then test (F) against `G'_p` filters it.
#[allow(clippy::too_many_arguments)]
pub fn build_level_f(
    parent: &FamilyLevel,
    reference: &FamilyLevel,
    s: &Schedule,
    ue: &UeLevel,
    y: &TestSequence,
    codes: &CodeFamily,
    caps: &Caps,
    seed: u64,
) -> Result<FamilyLevel> {
    if parent.k + 1 != ue.k {
        return Err(ForgeError::invalid(format!(
            "Bernstein level {} cannot be built on level {}",
            ue.k, parent.k
        )));
    }
    if reference.k != ue.p {
        return Err(ForgeError::invalid(format!(
            "reference level must be {}, got {}",
            ue.p, reference.k
        )));
    }
    let stats = bernstein_stats(reference, ue.n, ue.threshold())?;
    let mut level = build(parent, s, y, codes, caps, seed, Some(&stats))?;
    let extra = level.bernstein.take().expect("set by a Bernstein build");
    level.bernstein = Some(finish_record(extra, &level, reference, s, ue, &stats, seed)?);
    Ok(level)
}

enum Outcome {
    FailR(f64),
    FailF { deviation: f64 },
    Pass { block: Block, worst: f64, deviation: f64 },
}

struct Tally {
    draws: u64,
    passed_r: u64,
    passed: u64,
    stored: Vec<Block>,
    seen: HashSet<Block>,
    worst_stored: f64,
    largest_failure: f64,
    worst_deviation: f64,
}

fn build(
    parent: &FamilyLevel,
    s: &Schedule,
    y: &TestSequence,
    codes: &CodeFamily,
    caps: &Caps,
    seed: u64,
    stats: Option<&BernsteinStats>,
) -> Result<FamilyLevel> {
    let k = parent.k + 1;
    if parent.is_empty() {
        return Err(ForgeError::invalid(format!("level {} is empty", parent.k)));
    }
    let m = s.multiplier(k);
    let n_k = parent
        .length
        .checked_mul(m as usize)
        .ok_or_else(|| ForgeError::Capacity(format!("N_{k} overflows")))?;
    if s.length(k) != Some(n_k) {
        return Err(ForgeError::invalid(format!(
            "level {} has length {}, inconsistent with the schedule",
            parent.k, parent.length
        )));
    }
    let eps_plus_delta = s.eps_plus_delta(k);
    let test = CorrelationTest::new(y, codes, eps_plus_delta, m, n_k)?;
    if caps.max_candidates == 0 {
        return Err(ForgeError::ConstructionFailed {
            level: k,
            message: "caps.max_candidates = 0 leaves no candidates to test".into(),
            worst: 0.0,
        });
    }

    let pcount = parent.len() as u64;
    let total = pcount.checked_pow(m).filter(|&t| t <= caps.max_candidates);
    let evaluate = |idx: &[usize]| -> Result<Outcome> {
        let block = concat_refs(idx.iter().map(|&i| &parent.blocks[i]), s.alphabet)?;
        let v = test.check(&block)?;
        if !v.passes {
            return Ok(Outcome::FailR(v.worst));
        }
        match stats {
            None => Ok(Outcome::Pass {
                block,
                worst: v.worst,
                deviation: 0.0,
            }),
            Some(st) => {
                let deviation = st.deviation(&block)?;
                if deviation <= st.threshold {
                    Ok(Outcome::Pass {
                        block,
                        worst: v.worst,
                        deviation,
                    })
                } else {
                    Ok(Outcome::FailF { deviation })
                }
            }
        }
    };

    let mut tally = Tally {
        draws: 0,
        passed_r: 0,
        passed: 0,
        stored: Vec::new(),
        seen: HashSet::new(),
        worst_stored: 0.0,
        largest_failure: 0.0,
        worst_deviation: 0.0,
    };
    let mut first_candidates: Vec<Vec<usize>> = Vec::new();

    let mode = match total {
        Some(total) => {
            let mut next = 0u64;
            while next < total {
                let end = (next + BATCH as u64).min(total);
                let batch: Vec<Vec<usize>> = (next..end).map(|c| digits(c, pcount, m)).collect();
                remember(&mut first_candidates, &batch);
                let outcomes = batch.par_iter().map(|idx| evaluate(idx)).collect::<Vec<_>>();
                for o in outcomes {
                    absorb(&mut tally, o?, usize::MAX);
                }
                next = end;
            }
            BuildMode::Exhaustive
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            'draw: while tally.draws < caps.max_candidates && tally.stored.len() < caps.max_family {
                let size = (caps.max_candidates - tally.draws).min(BATCH as u64) as usize;
                let batch: Vec<Vec<usize>> = (0..size)
                    .map(|_| (0..m).map(|_| rng.gen_range(0..parent.len())).collect())
                    .collect();
                remember(&mut first_candidates, &batch);
                let outcomes = batch.par_iter().map(|idx| evaluate(idx)).collect::<Vec<_>>();
                for o in outcomes {
                    absorb(&mut tally, o?, caps.max_family);
                    if tally.stored.len() >= caps.max_family {
                        break 'draw;
                    }
                }
            }
            BuildMode::Sampled {
                cap: caps.max_family,
                seed,
            }
        }
    };

    if tally.passed_r == 0 {
        let lenient = first_candidates
            .par_iter()
            .map(|idx| {
                let block = concat_refs(idx.iter().map(|&i| &parent.blocks[i]), s.alphabet)?;
                test.max_abs_correlation(&block)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        return Err(ForgeError::ConstructionFailed {
            level: k,
            message: format!(
                "no candidate passed test (R) with 2(eps+delta) = {} after {} candidates; \
                 the most lenient of the first {} needs 2(eps+delta) > {lenient}",
                test.bound(),
                tally.draws,
                first_candidates.len()
            ),
            worst: tally.largest_failure,
        });
    }
    if tally.passed == 0 {
        return Err(ForgeError::ConstructionFailed {
            level: k,
            message: format!(
                "all {} blocks passing test (R) failed test (F) at threshold {}",
                tally.passed_r,
                stats.map_or(0.0, |st| st.threshold)
            ),
            worst: tally.worst_deviation,
        });
    }

    let tested = tally.draws;
    let (gamma, gamma_bar) = match mode {
        BuildMode::Exhaustive => (
            Gamma::Exact {
                passed: tally.passed,
                total: tested,
            },
            Gamma::Exact {
                passed: tally.passed_r,
                total: tested,
            },
        ),
        _ => (
            Gamma::sampled(tally.passed, tested),
            Gamma::sampled(tally.passed_r, tested),
        ),
    };
    let base = m as f64 * parent.log_count;
    let log_count = base + gamma.value().ln();
    let bernstein = stats.map(|st| BernsteinRecord {
        j: 0,
        p: st.p,
        n: st.n,
        q: (n_k / st.medium_len) as u64,
        beta: 0.0,
        threshold: st.threshold,
        log_count_bar: base + gamma_bar.value().ln(),
        conditional_failure: 1.0 - tally.passed as f64 / tally.passed_r as f64,
        gamma_bar,
        unconditional_failure: 0.0,
        unconditional_trials: 0,
        worst_deviation: tally.worst_deviation,
        bounds: Vec::new(),
    });
    let mut tests = vec![TestKind::R];
    if stats.is_some() {
        tests.push(TestKind::F);
    }
    Ok(FamilyLevel {
        k,
        length: n_k,
        multiplier: m,
        alphabet: s.alphabet,
        parent_size: parent.len(),
        eps_plus_delta,
        code_window: codes.max_window(),
        gamma,
        log_count,
        tests,
        mode,
        worst_correlation: tally.worst_stored,
        bernstein,
        blocks: tally.stored,
    })
}

fn remember(first: &mut Vec<Vec<usize>>, batch: &[Vec<usize>]) {
    let room = DIAGNOSTIC_SCANS.saturating_sub(first.len());
    first.extend(batch.iter().take(room).cloned());
}

fn absorb(t: &mut Tally, o: Outcome, cap: usize) {
    t.draws += 1;
    match o {
        Outcome::FailR(worst) => t.largest_failure = t.largest_failure.max(worst),
        Outcome::FailF { deviation, .. } => {
            t.passed_r += 1;
            t.worst_deviation = t.worst_deviation.max(deviation);
        }
        Outcome::Pass {
            block,
            worst,
            deviation,
        } => {
            t.passed_r += 1;
            t.passed += 1;
            t.worst_deviation = t.worst_deviation.max(deviation);
            if t.stored.len() < cap && t.seen.insert(block.clone()) {
                t.worst_stored = t.worst_stored.max(worst);
                t.stored.push(block);
            }
        }
    }
}

/// Base-`p` digits of `c`, most significant first.
fn digits(mut c: u64, p: u64, m: u32) -> Vec<usize> {
    let mut out = vec![0usize; m as usize];
    for slot in out.iter_mut().rev() {
        *slot = (c % p) as usize;
        c /= p;
    }
    out
}

fn finish_record(
    mut rec: BernsteinRecord,
    level: &FamilyLevel,
    reference: &FamilyLevel,
    s: &Schedule,
    ue: &UeLevel,
    stats: &BernsteinStats,
    seed: u64,
) -> Result<BernsteinRecord> {
    rec.j = ue.j;
    rec.beta = ue.beta;
    let q = rec.q as f64;
    let shorts = (s.alphabet as f64).powi(ue.n as i32);
    let trials = iid_trials(
        stats,
        rec.q as usize,
        ue.beta,
        None,
        UNCONDITIONAL_TRIALS,
        seed ^ ((level.k as u64) << 40),
    )?;
    rec.unconditional_failure = trials.rate;
    rec.unconditional_trials = trials.trials;
    let p = params! {"k" => level.k, "j" => ue.j, "p" => ue.p, "q" => rec.q, "n" => ue.n, "beta" => ue.beta};
    let in_tuples = (rec.log_count_bar - q * reference.log_count).exp();
    rec.bounds = vec![
        Inequality::probability_below(
            "pro1",
            p.clone(),
            trials.rate,
            2.0 * shorts * (-2.0 * q * ue.beta).exp(),
        )
        .with_note("estimated from iid tuples of reference blocks"),
        Inequality::greater("pro2", p.clone(), in_tuples, (-q * ue.beta).exp())
            .with_note("P(Ḡ_k) inside (G'_p)^q from the log counts"),
        Inequality::probability_below(
            "conditional_failure",
            p,
            rec.conditional_failure,
            2.0 * shorts * (-q * ue.beta).exp(),
        ),
    ];
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_are_big_endian() {
        assert_eq!(digits(5, 2, 4), vec![0, 1, 0, 1]);
        assert_eq!(digits(0, 3, 2), vec![0, 0]);
        assert_eq!(digits(8, 3, 2), vec![2, 2]);
    }
}
