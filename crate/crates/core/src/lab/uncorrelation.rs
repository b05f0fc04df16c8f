use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{ShiftedBits, TernaryPlanes};
use crate::error::{ForgeError, Result};
use crate::hierarchy::FamilyLevel;
use crate::schedule::Schedule;
use crate::sequence::{SequenceSource, TestSequence};
use crate::symbolic::{apply_code, concat_refs, Block, Code, CodeWindows, SignBlock};

/// What the uncorrelation bound needs to know about a built hierarchy.
#[derive(Clone, Copy)]
pub struct Hierarchy<'a> {
    pub schedule: &'a Schedule,
    pub windows: CodeWindows,
    /// Highest built level; `x` is assumed to be a shifted concatenation of its blocks.
    pub top: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAt {
    pub k: u32,
    pub m: u32,
    pub bound: f64,
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Hierarchy<'_> {
    /// The bound `2/(m-2) + ((m-4)/(m-2)) 2(eps_k + delta_k)` with `k` the
    /// smallest step such that `n < m_k^2 N_k`.
    ///
    /// For windows `w > 1` the `w - 1` positions at the end of every block
    /// are not covered by test (R), which adds `(w - 1)/N_k`.
    pub fn bound_at(&self, n: usize, f: &Code) -> Option<BoundAt> {
        let s = self.schedule;
        let k = (1..=self.top).find(|&k| {
            let m = s.multiplier(k) as usize;
            s.length(k).is_some_and(|nk| n < m * m * nk)
        })?;
        let m = s.multiplier(k);
        let nk = s.length(k)?;
        let mf = m as f64;
        let w = self.windows.window(k);
        let bound =
            2.0 / (mf - 2.0) + (mf - 4.0) / (mf - 2.0) * 2.0 * s.eps_plus_delta(k) + (w as f64 - 1.0) / nk as f64;
        let in_family = self.windows.family(s.alphabet, k).is_ok_and(|fam| fam.contains(f));
        // For k > 1 minimality of k already gives n > (m - 2) N_k.
        let long_enough = n > (m as usize).saturating_sub(2) * nk;
        let note = if !in_family {
            Some(format!("f is not in F_{k}"))
        } else if !long_enough {
            Some(format!("n <= (m_k - 2) N_k = {}", (m as usize - 2) * nk))
        } else {
            None
        };
        Some(BoundAt {
            k,
            m,
            bound,
            applicable: in_family && long_enough && m > 2,
            note,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncorrelationEntry {
    pub n: usize,
    /// `(1/n) sum_{i <= n} f(x_i ... x_{i+w-1}) y_i`.
    pub a_n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundAt>,
    /// `bound - |A(n)|` when the bound applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    pub holds: bool,
}

impl UncorrelationEntry {
    fn new(n: usize, a_n: f64, bound: Option<BoundAt>) -> Self {
        let margin = bound.as_ref().filter(|b| b.applicable).map(|b| b.bound - a_n.abs());
        UncorrelationEntry {
            n,
            a_n,
            bound,
            margin,
            holds: margin.is_none_or(|m| m >= 0.0),
        }
    }

    pub fn applicable(&self) -> bool {
        self.margin.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncorrelationReport {
    pub code: u32,
    pub entries: Vec<UncorrelationEntry>,
}

impl UncorrelationReport {
    pub fn holds(&self) -> bool {
        self.entries.iter().all(|e| e.holds)
    }
}

/// Orbit averages `A(n)` of `f(x) y` against the uncorrelation bound.
pub fn uncorrelation_check(
    x: &Block,
    y: &TestSequence,
    f: &Code,
    n_list: &[usize],
    h: &Hierarchy,
) -> Result<UncorrelationReport> {
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let w = f.window();
    if x.len() < n_max + w - 1 {
        return Err(ForgeError::SequenceTooShort {
            required: n_max + w - 1,
            available: x.len(),
        });
    }
    if y.len() < n_max {
        return Err(ForgeError::SequenceTooShort {
            required: n_max,
            available: y.len(),
        });
    }
    if n_list.contains(&0) {
        return Err(ForgeError::invalid("n must be positive"));
    }
    let fx = apply_code(f, &x.slice(0, n_max + w - 1)?)?;
    let yv = y.values();
    let mut prefix = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for (s, v) in fx.signs().iter().zip(yv) {
        acc += *s as f64 * v;
        prefix.push(acc);
    }
    let entries = n_list
        .iter()
        .map(|&n| UncorrelationEntry::new(n, prefix[n] / n as f64, h.bound_at(n, f)))
        .collect();
    Ok(UncorrelationReport { code: f.id(), entries })
}

/// `y_i = f(x_i ... x_{i+w-1})`, the sequence that correlates perfectly with `x`.
pub fn self_image(x: &Block, f: &Code) -> Result<TestSequence> {
    let fx: SignBlock = apply_code(f, x)?;
    TestSequence::new(
        fx.to_f64(),
        SequenceSource::Derived {
            from: format!("image of a point under code {}", f.id()),
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n: usize,
    pub bound: Option<BoundAt>,
    /// Largest `|A(n)|` over all swept points and codes.
    pub max_abs: f64,
    /// `(block index, offset, code id)` attaining `max_abs`.
    pub worst: (usize, usize, u32),
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub k: u32,
    pub blocks: usize,
    pub offsets: usize,
    pub codes: usize,
    pub seed: u64,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn holds(&self) -> bool {
        self.entries.iter().all(|e| e.holds)
    }

    /// One line per tested `n`, for plotting.
    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            n: usize,
            k: Option<u32>,
            m: Option<u32>,
            bound: Option<f64>,
            applicable: bool,
            max_abs: f64,
            block: usize,
            offset: usize,
            code: u32,
            holds: bool,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            let b = e.bound.as_ref();
            w.serialize(Row {
                n: e.n,
                k: b.map(|b| b.k),
                m: b.map(|b| b.m),
                bound: b.map(|b| b.bound),
                applicable: b.is_some_and(|b| b.applicable),
                max_abs: e.max_abs,
                block: e.worst.0,
                offset: e.worst.1,
                code: e.worst.2,
                holds: e.holds,
            })
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
    }
}

/// Runs the check from every block of `level` at every offset `0..N_k`.
///
/// The point starting in block `B` is `B` followed by blocks drawn with a
/// generator seeded from `(seed, index of B)`; the draw is shared by all
/// offsets into `B`. Codes are taken up to sign, since `|A(n)|` does not see it.
pub fn uniform_sweep(
    level: &FamilyLevel,
    y: &TestSequence,
    codes: &[Code],
    n_list: &[usize],
    h: &Hierarchy,
    seed: u64,
) -> Result<SweepReport> {
    let mut ns: Vec<usize> = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let n_max = *ns.last().ok_or_else(|| ForgeError::invalid("n_list is empty"))?;
    if ns[0] == 0 {
        return Err(ForgeError::invalid("n must be positive"));
    }
    if level.is_empty() {
        return Err(ForgeError::invalid(format!("level {} has no blocks", level.k)));
    }
    if y.len() < n_max {
        return Err(ForgeError::SequenceTooShort {
            required: n_max,
            available: y.len(),
        });
    }
    let reps = sign_representatives(codes);
    let w_max = reps.iter().map(|c| c.window()).max().unwrap_or(1);
    let nk = level.length;
    let needed = nk + n_max + w_max - 1;
    let followers = needed.div_ceil(nk).saturating_sub(1);
    let y_short = &y.values()[..n_max];
    let planes = TernaryPlanes::new(y_short);

    type Best = (f64, usize, usize, u32);
    let per_block: Vec<Vec<Best>> = (0..level.len())
        .into_par_iter()
        .map(|bi| -> Result<Vec<Best>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (bi as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            let picks: Vec<&Block> = std::iter::once(&level.blocks[bi])
                .chain((0..followers).map(|_| &level.blocks[rng.gen_range(0..level.len())]))
                .collect();
            let point = concat_refs(picks.into_iter(), level.alphabet)?;
            let mut best: Vec<Best> = vec![(-1.0, 0, 0, 0); ns.len()];
            let mut sums = vec![0.0f64; ns.len()];
            for f in &reps {
                let fx = apply_code(f, &point)?;
                let shifted = planes.as_ref().map(|_| ShiftedBits::new(&fx.plus_mask()));
                for offset in 0..nk {
                    let mut prev = 0usize;
                    let mut acc = 0.0;
                    for (slot, &n) in sums.iter_mut().zip(&ns) {
                        acc += match (&planes, &shifted) {
                            (Some(p), Some(bits)) => p.window_dot(prev, bits.window(offset + prev), n - prev) as f64,
                            _ => (prev..n)
                                .map(|i| fx.signs()[offset + i] as f64 * y_short[i])
                                .sum::<f64>(),
                        };
                        *slot = acc;
                        prev = n;
                    }
                    for (slot, (&n, &s)) in best.iter_mut().zip(ns.iter().zip(&sums)) {
                        let a = (s / n as f64).abs();
                        if a > slot.0 {
                            *slot = (a, bi, offset, f.id());
                        }
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;

    let entries = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            // Ties go to the earliest block, keeping the report independent of scheduling.
            let best = per_block
                .iter()
                .map(|b| b[i])
                .fold((-1.0, 0, 0, 0), |acc: Best, b| if b.0 > acc.0 { b } else { acc });
            // The bound depends on f only through membership in F_k, and
            // applies to the sweep when every swept code is a member.
            let bound = h.bound_at(n, reps[0]).map(|mut b| {
                if let Some(out) = reps.iter().find(|f| !h.bound_at(n, f).is_some_and(|x| x.applicable)) {
                    b.applicable = false;
                    b.note
                        .get_or_insert_with(|| format!("code {} is not covered", out.id()));
                }
                b
            });
            let holds = bound.as_ref().is_none_or(|b| !b.applicable || best.0 <= b.bound);
            SweepEntry {
                n,
                bound,
                max_abs: best.0.max(0.0),
                worst: (best.1, best.2, best.3),
                holds,
            }
        })
        .collect();
    Ok(SweepReport {
        k: level.k,
        blocks: level.len(),
        offsets: nk,
        codes: reps.len(),
        seed,
        entries,
    })
}

fn sign_representatives(codes: &[Code]) -> Vec<&Code> {
    let mut seen: Vec<&Code> = Vec::new();
    for c in codes {
        let neg = c.negated();
        if !seen
            .iter()
            .any(|s| s.window() == c.window() && s.table() == neg.table())
        {
            seen.push(c);
        }
    }
    seen
}
