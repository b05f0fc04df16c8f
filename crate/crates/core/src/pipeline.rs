//! The three stages behind the command line: schedule, build and verify.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::artifact::{
    complete_levels, load_level, read_json, save_level, sha256_hex, write_atomic, write_json, RunRecord, ScheduleRecord,
};
use crate::config::{RunConfig, SequenceSpec};
use crate::error::{ForgeError, Result};
use crate::hierarchy::naive::{reverify, ReverifyReport};
use crate::hierarchy::{build_level, check_gamma_chain, check_nesting, FamilyLevel, Gamma, GammaChainReport};
use crate::lab::{
    diameter_report, entropy_report, sample_point, self_image, uncorrelation_check, uniform_sweep, DiameterReport,
    EntropyReport, Hierarchy, SweepReport,
};
use crate::params;
use crate::report::Check;
use crate::schedule::{build_schedule, Schedule};
use crate::sequence::TestSequence;

/// Sets up the schedule and writes `schedule.json` when `out` is given.
///
/// A gating validation failure is a schedule error naming the constraint;
/// the artifact is still written so the report can be inspected.
pub fn cmd_schedule(cfg: &RunConfig, out: Option<&Path>) -> Result<ScheduleRecord> {
    let schedule = build_schedule(&cfg.schedule, cfg.mode)?;
    let validation = schedule.validate();
    let record = ScheduleRecord {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        schedule,
        validation,
    };
    if let Some(out) = out {
        write_json(&out.join("schedule.json"), &record)?;
    }
    if let Some(bad) = record.validation.iter().find(|i| i.gate_failed()) {
        return Err(ForgeError::Schedule(format!(
            "constraint {} fails ({} vs {}) at {}",
            bad.name,
            bad.lhs,
            bad.rhs,
            serde_json::to_string(&bad.params)?
        )));
    }
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub k: u32,
    #[serde(rename = "N_k")]
    pub length: usize,
    pub blocks: usize,
    pub gamma: Gamma,
    pub resumed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub config_hash: String,
    pub seed: u64,
    pub levels: Vec<LevelSummary>,
}

fn run_record(cfg: &RunConfig, y: &TestSequence) -> RunRecord {
    RunRecord {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg.clone(),
        config_dir: matches!(cfg.sequence, SequenceSpec::File { .. }).then(|| cfg.base_dir.clone()),
        sequence_sha256: sha256_hex(y.to_text().as_bytes()),
        sequence_len: y.len(),
    }
}

/// Builds levels `0..=top` into `out`, resuming after the last complete level.
///
/// `top` defaults to `caps.max_level`. Refuses a directory that holds a run
/// of a different config, or a level whose blocks no longer match their digest.
pub fn cmd_build(cfg: &RunConfig, out: &Path, top: Option<u32>) -> Result<BuildSummary> {
    let hash = cfg.hash();
    let run_path = out.join("run.json");
    if run_path.is_file() {
        let prev: RunRecord = read_json(&run_path)?;
        if prev.config_hash != hash {
            return Err(ForgeError::Config(format!(
                "{} holds a run of config {}, not {hash}; use a fresh directory",
                out.display(),
                prev.config_hash
            )));
        }
    }
    let y = cfg.load_sequence()?;
    write_json(&run_path, &run_record(cfg, &y))?;
    let schedule = cmd_schedule(cfg, Some(out))?.schedule;
    let top = top
        .unwrap_or(cfg.schedule.caps.max_level)
        .min(cfg.schedule.caps.max_level);

    let mut levels: Vec<FamilyLevel> = Vec::new();
    let mut summary = Vec::new();
    for k in complete_levels(out).into_iter().take_while(|&k| k <= top) {
        let loaded = load_level(out, k)?;
        if loaded.meta.config_hash != hash || !loaded.digest_matches {
            return Err(ForgeError::Verification(format!(
                "level {k} in {} was modified or belongs to another run; refusing to resume",
                out.display()
            )));
        }
        summary.push(level_summary(&loaded.level, true));
        levels.push(loaded.level);
    }
    while levels.len() as u32 <= top {
        let level = build_level(&levels, &schedule, &y, &cfg.codes, &cfg.schedule.caps, cfg.seed)?;
        save_level(out, &level, &hash, cfg.seed)?;
        summary.push(level_summary(&level, false));
        levels.push(level);
    }
    Ok(BuildSummary {
        config_hash: hash,
        seed: cfg.seed,
        levels: summary,
    })
}

fn level_summary(l: &FamilyLevel, resumed: bool) -> LevelSummary {
    LevelSummary {
        k: l.k,
        length: l.length,
        blocks: l.len(),
        gamma: l.gamma.clone(),
        resumed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Schedule,
    Reverify,
    Nesting,
    Gamma,
    Entropy,
    Spread,
    Uncorrelation,
}

impl CheckKind {
    pub const ALL: [CheckKind; 7] = [
        CheckKind::Schedule,
        CheckKind::Reverify,
        CheckKind::Nesting,
        CheckKind::Gamma,
        CheckKind::Entropy,
        CheckKind::Spread,
        CheckKind::Uncorrelation,
    ];
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

impl FromStr for CheckKind {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<CheckKind> {
        CheckKind::ALL.into_iter().find(|c| c.to_string() == s).ok_or_else(|| {
            let names: Vec<String> = CheckKind::ALL.iter().map(ToString::to_string).collect();
            ForgeError::Config(format!("unknown check {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Parses `a,b,c`; `all` or an empty list selects everything.
pub fn parse_checks(text: &str) -> Result<BTreeSet<CheckKind>> {
    let names: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() || names == ["all"] {
        return Ok(CheckKind::ALL.into_iter().collect());
    }
    names.into_iter().map(CheckKind::from_str).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub seed: u64,
    pub mode: crate::schedule::Mode,
    pub selected: Vec<CheckKind>,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reverify: Vec<ReverifyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_chain: Option<GammaChainReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diameter: Vec<DiameterReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.gate_failed())
    }
}

/// Re-checks a run directory and writes `verify.json` (and
/// `uncorrelation.csv` when the sweep runs) into it.
///
/// With `expected` given, a run built from a different config is refused.
pub fn cmd_verify(dir: &Path, selected: &BTreeSet<CheckKind>, expected: Option<&RunConfig>) -> Result<VerifyReport> {
    let run: RunRecord = read_json(&dir.join("run.json"))?;
    let mut cfg = run.config.clone();
    cfg.base_dir = run.config_dir.clone().unwrap_or_default();
    if let Some(exp) = expected {
        if exp.hash() != run.config_hash {
            return Err(ForgeError::Config(format!(
                "{} was built from config {}, not {}",
                dir.display(),
                run.config_hash,
                exp.hash()
            )));
        }
    }
    let hash = run.config_hash.clone();
    let mut checks = Vec::new();
    let integrity = |name: &str, params, ok: bool, note: &str| {
        Check::new(name, params, if ok { 0.0 } else { 1.0 }, 0.0, ok).with_note(note.to_string())
    };
    checks.push(integrity(
        "config_hash",
        params! {},
        cfg.hash() == hash,
        "the embedded config hashes to the recorded value",
    ));

    let sched: ScheduleRecord = read_json(&dir.join("schedule.json"))?;
    let schedule = build_schedule(&cfg.schedule, cfg.mode)?;
    checks.push(integrity(
        "schedule_artifact",
        params! {},
        sched.config_hash == hash && sched.schedule == schedule,
        "schedule.json matches the schedule rebuilt from the config",
    ));

    let y = cfg.load_sequence()?;
    checks.push(integrity(
        "sequence_digest",
        params! {"len" => y.len()},
        sha256_hex(y.to_text().as_bytes()) == run.sequence_sha256,
        "the test sequence is the one the run was built against",
    ));

    let mut levels = Vec::new();
    for k in complete_levels(dir) {
        let loaded = load_level(dir, k)?;
        checks.push(integrity(
            "level_artifact",
            params! {"k" => k},
            loaded.meta.config_hash == hash && loaded.meta.seed == run.seed,
            "meta.json carries the run's config hash and seed",
        ));
        checks.push(integrity(
            "blocks_digest",
            params! {"k" => k},
            loaded.digest_matches,
            "blocks.txt matches the digest in meta.json",
        ));
        levels.push(loaded.level);
    }
    if levels.is_empty() {
        return Err(ForgeError::Verification(format!(
            "{} holds no built levels",
            dir.display()
        )));
    }
    let top = levels.len() as u32 - 1;

    let mut report = VerifyReport {
        config_hash: hash,
        seed: run.seed,
        mode: cfg.mode,
        selected: selected.iter().copied().collect(),
        passed: false,
        checks: Vec::new(),
        reverify: Vec::new(),
        gamma_chain: None,
        entropy: None,
        diameter: Vec::new(),
        sweep: None,
    };

    if selected.contains(&CheckKind::Schedule) {
        checks.extend(schedule.validate().iter().map(Check::from_inequality));
    }
    if selected.contains(&CheckKind::Reverify) {
        for k in 1..=top {
            let level = &levels[k as usize];
            let reference = schedule.ue_at(k).and_then(|u| levels.get(u.p as usize));
            let codes = cfg.codes.family(schedule.alphabet, k)?;
            let r = reverify(level, &levels[k as usize - 1], reference, &schedule, &y, &codes)?;
            let mut c = Check::new("reverify", params! {"k" => k}, r.failures.len() as f64, 0.0, r.holds())
                .with_note("blocks failing the independent re-check");
            if let Some((i, why)) = r.failures.first() {
                c = c.with_note(format!("block {i}: {why}"));
            }
            checks.push(c);
            report.reverify.push(r);
        }
    }
    if selected.contains(&CheckKind::Nesting) {
        for k in 1..=top {
            checks.extend(check_nesting(&levels, k, &schedule));
        }
    }
    if selected.contains(&CheckKind::Gamma) {
        let chain = check_gamma_chain(&levels, &schedule);
        checks.extend(chain.entries.iter().map(Check::from_inequality));
        report.gamma_chain = Some(chain);
    }
    if selected.contains(&CheckKind::Entropy) {
        let e = entropy_report(&levels, schedule.initial_multiplier)?;
        checks.extend(e.checks.iter().cloned());
        report.entropy = Some(e);
    }
    if selected.contains(&CheckKind::Spread) {
        for ue in schedule.ue_levels.iter().filter(|u| u.k <= top) {
            let reference_len = levels[ue.p as usize].length;
            let d = diameter_report(
                &levels[ue.k as usize],
                ue,
                reference_len,
                cfg.checks.diameter_samples,
                cfg.seed,
            )?;
            checks.extend(d.checks.iter().cloned());
            report.diameter.push(d);
        }
    }
    if selected.contains(&CheckKind::Uncorrelation) && top >= 1 {
        let h = Hierarchy {
            schedule: &schedule,
            windows: cfg.codes,
            top,
        };
        let n_list = if cfg.checks.n_list.is_empty() {
            default_n_list(&schedule, top, y.len())
        } else {
            cfg.checks.n_list.clone()
        };
        let codes = cfg.codes.family(schedule.alphabet, top)?;
        if cfg.checks.sweep && !n_list.is_empty() {
            let sweep = uniform_sweep(&levels[top as usize], &y, &codes.codes, &n_list, &h, cfg.seed)?;
            for e in &sweep.entries {
                let (bound, applicable) = e.bound.as_ref().map_or((1.0, false), |b| (b.bound, b.applicable));
                checks.push(
                    Check::new("uniform_uncorrelation", params! {"n" => e.n}, e.max_abs, bound, e.holds)
                        .with_slack(bound - e.max_abs)
                        .gating(applicable)
                        .with_note(if applicable {
                            "max |A(n)| over all blocks, offsets and codes"
                        } else {
                            "the bound does not apply at this n"
                        }),
                );
            }
            write_atomic(&dir.join("uncorrelation.csv"), sweep.to_csv().as_bytes())?;
            report.sweep = Some(sweep);
        }
        checks.push(sensitivity(&levels[top as usize], &codes.codes, &n_list, &h, cfg.seed)?);
    }

    report.passed = !checks.iter().any(Check::gate_failed);
    report.checks = checks;
    write_json(&dir.join("verify.json"), &report)?;
    Ok(report)
}

/// The check must notice a sequence built to correlate with a point.
fn sensitivity(
    level: &FamilyLevel,
    codes: &[crate::symbolic::Code],
    n_list: &[usize],
    h: &Hierarchy,
    seed: u64,
) -> Result<Check> {
    let Some(f) = codes.iter().find(|c| !c.is_constant()).or(codes.first()) else {
        return Err(ForgeError::invalid("empty code family"));
    };
    let n_max = n_list.iter().copied().max().unwrap_or(level.length).max(1);
    let x = sample_point(level, (n_max + f.window()).max(level.length), seed)?;
    let y = self_image(&x, f)?;
    let ns: Vec<usize> = if n_list.is_empty() {
        vec![n_max]
    } else {
        n_list.to_vec()
    };
    let r = uncorrelation_check(&x, &y, f, &ns, h)?;
    let applicable = r.entries.iter().filter(|e| e.applicable()).count();
    let caught = r.entries.iter().filter(|e| !e.holds).count();
    Ok(Check::new(
        "uncorrelation_detects_self_image",
        params! {"code" => f.id(), "applicable" => applicable},
        caught as f64,
        applicable as f64,
        applicable > 0 && caught == applicable,
    )
    .with_note("entries flagged when y is the coded image of the point itself"))
}

/// Three orbit lengths per built level inside the window where `k` is the
/// resolved step and the bound applies.
pub fn default_n_list(s: &Schedule, top: u32, y_len: usize) -> Vec<usize> {
    let mut out = BTreeSet::new();
    let mut prev_hi = 0usize;
    for k in 1..=top {
        let (Some(nk), m) = (s.length(k), s.multiplier(k) as usize) else {
            break;
        };
        let lo = ((m.saturating_sub(2)) * nk + 1).max(prev_hi);
        let hi = (m * m * nk - 1).min(y_len);
        prev_hi = m * m * nk;
        if lo > hi {
            continue;
        }
        let mid = ((lo as f64) * (hi as f64)).sqrt().round() as usize;
        out.extend([lo, mid.clamp(lo, hi), hi]);
    }
    out.into_iter().collect()
}
