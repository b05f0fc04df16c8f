//! One PASS/FAIL line per acceptance criterion, on the fixture in
//! `configs/desk.toml`. Exits nonzero when a criterion that is attainable on
//! this fixture fails; criteria that cannot be met by construction are
//! reported as FAIL with the reason and do not change the exit status.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use forge_core::artifact::{complete_levels, load_level, sha256_hex};
use forge_core::config::RunConfig;
use forge_core::hierarchy::naive::reverify;
use forge_core::hierarchy::{bernstein_stats, iid_trials, FamilyLevel};
use forge_core::lab::{
    closeness_bound, diameter_report, entropy_report, measure_distance, sample_point, self_image, uncorrelation_check,
    uniform_sweep, EmpiricalMeasure, Hierarchy,
};
use forge_core::pipeline::cmd_build;
use forge_core::schedule::{build_schedule, closeness_params, jump_index, JumpRule, Schedule};
use forge_core::sequence::{mobius, mobius_table, verify_aperiodic, TestSequence};
use forge_core::ForgeError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and limits.
const MOBIUS_N: usize = 100_000;
const MOBIUS_SECS: f64 = 5.0;
const AP_N: usize = 1_000_000;
const AP_T_MAX: usize = 10;
const AP_TOL: f64 = 0.05;
const AP_SECS: f64 = 30.0;
const THRESHOLD_REL_TOL: f64 = 1e-15;
const REVERIFY_SECS: f64 = 600.0;
const ENTROPY_REL_TOL: f64 = 1e-12;
const TRIALS: u64 = 100_000;
const TRIAL_Q: usize = 42;
const TRIAL_BETA: f64 = 0.02;
const TRIAL_SHORT_N: usize = 2;
const TRIAL_SECS: f64 = 120.0;
const DIAMETER_SAMPLES: usize = 50;
const DIAMETER_SECS: f64 = 300.0;
const TRIPLES: usize = 1000;
const TRIANGLE_TOL: f64 = 1e-12;

struct Line {
    id: &'static str,
    name: &'static str,
    pass: bool,
    /// Unattainable on this fixture; reported but not gating.
    infeasible: bool,
    detail: String,
}

struct Fixture {
    cfg: RunConfig,
    schedule: Schedule,
    y: TestSequence,
    levels: Vec<FamilyLevel>,
    build_time: Duration,
    _dir: tempfile::TempDir,
}

fn fixture() -> Fixture {
    let cfg = common::desk_config();
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    cmd_build(&cfg, dir.path(), None).expect("the desk fixture builds");
    let build_time = t.elapsed();
    let levels = complete_levels(dir.path())
        .into_iter()
        .map(|k| load_level(dir.path(), k).unwrap().level)
        .collect();
    Fixture {
        schedule: build_schedule(&cfg.schedule, cfg.mode).unwrap(),
        y: cfg.load_sequence().unwrap(),
        cfg,
        levels,
        build_time,
        _dir: dir,
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn c01() -> Line {
    let t = Instant::now();
    let table = mobius_table(MOBIUS_N);
    let mismatches = (1..=MOBIUS_N as u64)
        .filter(|&n| table[n as usize] != common::trial_mobius(n))
        .count();
    let s = secs(t);
    Line {
        id: "c01",
        name: "mobius_sieve",
        pass: mismatches == 0 && s < MOBIUS_SECS,
        infeasible: false,
        detail: format!("n<={MOBIUS_N}: {mismatches} mismatches vs trial division, {s:.2}s (limit {MOBIUS_SECS}s)"),
    }
}

fn c02() -> Line {
    let t = Instant::now();
    let report = mobius(AP_N)
        .and_then(|y| verify_aperiodic(&y, AP_T_MAX, AP_TOL))
        .unwrap();
    let s = secs(t);
    let flagged = report.flagged().count();
    Line {
        id: "c02",
        name: "aperiodicity_screen",
        pass: flagged == 0 && s < AP_SECS,
        infeasible: false,
        detail: format!(
            "mobius({AP_N}), t<={AP_T_MAX}: max |avg| = {:.5} at (t,l)={:?} (tol {AP_TOL}), {flagged} flagged, {s:.2}s (limit {AP_SECS}s)",
            report.max_abs_average, report.worst
        ),
    }
}

fn c03(f: &Fixture) -> Line {
    let k = jump_index(6, 1.0, JumpRule::BPrime, 0);
    let oracle = common::bisect_jump_index(6, 1.0, JumpRule::BPrime.base());
    let mut rs: Vec<f64> = f.cfg.schedule.r.clone();
    rs.extend([2.0, 1.0, 0.5, 0.25, 0.1, 0.01]);
    let mut worst_rel = 0.0f64;
    let mut contract_ok = true;
    for &r in &rs {
        let c = closeness_params(f.schedule.alphabet, r).unwrap();
        contract_ok &= closeness_bound(f.schedule.alphabet, c.n, c.theta) < r;
    }
    for u in &f.schedule.ue_levels {
        worst_rel = worst_rel.max((u.threshold() - u.theta / 4.0).abs() / (u.theta / 4.0));
        contract_ok &= closeness_bound(f.schedule.alphabet, u.n, u.theta) < u.r;
    }
    Line {
        id: "c03",
        name: "schedule_arithmetic",
        pass: k == 137 && oracle == 137 && worst_rel <= THRESHOLD_REL_TOL && contract_ok,
        infeasible: false,
        detail: format!(
            "jump_index(6, b') = {k}, bisection {oracle}; max rel |sqrt(8 beta) - theta/4| = {worst_rel:.1e} (tol {THRESHOLD_REL_TOL:.0e}); \
             closeness contract {} for r in {rs:?}",
            if contract_ok { "holds" } else { "FAILS" }
        ),
    }
}

fn c04(f: &Fixture) -> Line {
    let t = Instant::now();
    let mut bad = 0usize;
    let mut total = 0usize;
    for k in 1..f.levels.len() as u32 {
        let reference = f.schedule.ue_at(k).and_then(|u| f.levels.get(u.p as usize));
        let codes = f.cfg.codes.family(f.schedule.alphabet, k).unwrap();
        let r = reverify(
            &f.levels[k as usize],
            &f.levels[k as usize - 1],
            reference,
            &f.schedule,
            &f.y,
            &codes,
        )
        .unwrap();
        bad += r.failures.len();
        total += r.blocks;
    }
    let s = secs(t);
    Line {
        id: "c04",
        name: "construction_soundness",
        pass: bad == 0 && total > 0 && s < REVERIFY_SECS,
        infeasible: false,
        detail: format!(
            "desk eps tables {:?}: {}/{total} stored blocks re-pass under the naive checker, levels 1..={}, {s:.1}s (limit {REVERIFY_SECS}s)",
            f.cfg.schedule.eps_table.as_deref().unwrap_or_default(),
            total - bad,
            f.levels.len() - 1
        ),
    }
}

/// The fixture with `eps_k + delta_k = 0.1 ln 3 / ln(k + 2)` as written.
fn c04_literal(f: &Fixture) -> Line {
    let mut cfg = f.cfg.clone();
    cfg.schedule.eps_table = None;
    cfg.schedule.delta_table = None;
    cfg.schedule.c_eps = 0.05 * 3f64.ln();
    cfg.schedule.c_delta = 0.05 * 3f64.ln();
    cfg.schedule.eps_shift = Some(2.0);
    let s = build_schedule(&cfg.schedule, cfg.mode).unwrap();
    let dir = tempfile::tempdir().unwrap();
    match cmd_build(&cfg, dir.path(), None) {
        Err(ForgeError::ConstructionFailed { level, message, .. }) => Line {
            id: "c04",
            name: "construction_soundness_literal_eps",
            pass: false,
            infeasible: true,
            detail: format!(
                "INFEASIBLE: 2(eps_1+delta_1) = {:.4} but every level-{level} candidate needs more than 5/6 ({message})",
                2.0 * s.eps_plus_delta(1)
            ),
        },
        Err(e) => Line {
            id: "c04",
            name: "construction_soundness_literal_eps",
            pass: false,
            infeasible: false,
            detail: format!("unexpected error: {e}"),
        },
        Ok(summary) => {
            let levels: Vec<FamilyLevel> = summary
                .levels
                .iter()
                .map(|l| load_level(dir.path(), l.k).unwrap().level)
                .collect();
            let mut bad = 0;
            for k in 1..levels.len() as u32 {
                let reference = s.ue_at(k).and_then(|u| levels.get(u.p as usize));
                let codes = cfg.codes.family(s.alphabet, k).unwrap();
                bad += reverify(&levels[k as usize], &levels[k as usize - 1], reference, &s, &f.y, &codes)
                    .unwrap()
                    .failures
                    .len();
            }
            Line {
                id: "c04",
                name: "construction_soundness_literal_eps",
                pass: bad == 0,
                infeasible: false,
                detail: format!("built {} levels, {bad} blocks fail the naive checker", levels.len() - 1),
            }
        }
    }
}

fn c05(f: &Fixture) -> Line {
    let l1 = &f.levels[1];
    let gamma = l1.gamma.ratio();
    let (identity, rel) = match gamma {
        Some(g) => {
            let h = (l1.len() as f64).ln() / l1.length as f64;
            let ln_gamma = (*g.numer() as f64).ln() - (*g.denom() as f64).ln();
            let rhs = (l1.alphabet as f64).ln() + ln_gamma / l1.length as f64;
            let rel = (h - rhs).abs() / h.abs();
            (rel <= ENTROPY_REL_TOL, rel)
        }
        None => (false, f64::NAN),
    };
    let e = entropy_report(&f.levels, f.schedule.initial_multiplier).unwrap();
    let failed: Vec<String> = e
        .checks
        .iter()
        .filter(|c| c.gating && !c.holds)
        .map(|c| format!("{} {:?}", c.check, c.params))
        .collect();
    let ent2 = e.checks.iter().filter(|c| c.check == "ent2").count();
    let lower = e
        .checks
        .iter()
        .filter(|c| c.check == "entropy_lower_bound" && c.gating)
        .count();
    let hs: Vec<String> = e.levels.iter().map(|l| format!("{:.5}", l.h)).collect();
    Line {
        id: "c05",
        name: "entropy",
        pass: identity && failed.is_empty() && ent2 > 0 && lower > 0,
        infeasible: false,
        detail: format!(
            "gamma_1 = {} exact, identity rel err {rel:.1e} (tol {ENTROPY_REL_TOL:.0e}); h = [{}] vs lower bound {:.5} \
             ({lower} gated); {ent2} ent2 pairs; failures: {failed:?}",
            gamma.map_or("?".into(), |g| g.to_string()),
            hs.join(", "),
            e.lower_bound
        ),
    }
}

fn c06(f: &Fixture) -> (Line, Line) {
    let t = Instant::now();
    let reference = &f.levels[1];
    let threshold = (8.0 * TRIAL_BETA).sqrt();
    let stats = bernstein_stats(reference, TRIAL_SHORT_N, threshold).unwrap();
    // D = "01".
    let fixed = iid_trials(&stats, TRIAL_Q, TRIAL_BETA, Some(1), TRIALS, f.cfg.seed).unwrap();
    let any = iid_trials(&stats, TRIAL_Q, TRIAL_BETA, None, TRIALS, f.cfg.seed).unwrap();
    let s = secs(t);
    let describe = |r: &forge_core::hierarchy::TrialReport| {
        format!(
            "q={} beta={} threshold {:.3}: rate {:.5} <= bound {:.4} + 3 sigma ({:.5})",
            r.q, r.beta, r.threshold, r.rate, r.bound, r.sigma
        )
    };
    (
        Line {
            id: "c06",
            name: "bernstein_concentration",
            pass: fixed.bound <= 0.5 && fixed.holds && s < TRIAL_SECS,
            infeasible: false,
            detail: format!(
                "{TRIALS} trials over level 1 ({} blocks), n={TRIAL_SHORT_N}, D=01: {}, {s:.1}s (limit {TRIAL_SECS}s)",
                reference.len(),
                describe(&fixed)
            ),
        },
        Line {
            id: "c06",
            name: "bernstein_concentration_any_short_block",
            pass: any.holds,
            infeasible: false,
            detail: format!("max over the {} short blocks: {}", stats.shorts(), describe(&any)),
        },
    )
}

fn c07(f: &Fixture) -> Line {
    let t = Instant::now();
    let top = f.levels.len() as u32 - 1;
    let mut parts = Vec::new();
    let mut pass = true;
    let mut any = false;
    for ue in f.schedule.ue_levels.iter().filter(|u| u.k <= top) {
        any = true;
        let reference_len = f.levels[ue.p as usize].length;
        let d = diameter_report(
            &f.levels[ue.k as usize],
            ue,
            reference_len,
            DIAMETER_SAMPLES,
            f.cfg.seed,
        )
        .unwrap();
        let get = |name: &str| d.checks.iter().find(|c| c.check == name).unwrap();
        let spread = get("freq_spread");
        let diameter = get("diameter");
        pass &= spread.holds && diameter.holds;
        parts.push(format!(
            "k={} n={}: spread {:.4} <= {:.4} (theta {:.4} + 2 n/N_p); diameter {:.4} + tail {:.4} = {:.4} < r {}",
            ue.k, ue.n, spread.measured, spread.bound, ue.theta, d.diameter, d.tail_bound, diameter.measured, ue.r
        ));
    }
    let s = secs(t);
    Line {
        id: "c07",
        name: "frequency_spread",
        pass: any && pass && s < DIAMETER_SECS,
        infeasible: false,
        detail: format!(
            "{}; {DIAMETER_SAMPLES} points, {s:.1}s (limit {DIAMETER_SECS}s)",
            parts.join("; ")
        ),
    }
}

fn c08(f: &Fixture) -> (Line, Line) {
    let t = Instant::now();
    let top = f.levels.len() as u32 - 1;
    let h = Hierarchy {
        schedule: &f.schedule,
        windows: f.cfg.codes,
        top,
    };
    let codes = f.cfg.codes.family(f.schedule.alphabet, top).unwrap();
    let n_list = &f.cfg.checks.n_list;
    let level = &f.levels[top as usize];
    let sweep = uniform_sweep(level, &f.y, &codes.codes, n_list, &h, f.cfg.seed).unwrap();
    let applicable: Vec<_> = sweep
        .entries
        .iter()
        .filter(|e| e.bound.as_ref().is_some_and(|b| b.applicable))
        .collect();
    let violations: Vec<usize> = applicable.iter().filter(|e| !e.holds).map(|e| e.n).collect();
    let tightest = applicable
        .iter()
        .map(|e| (e.n, e.max_abs, e.bound.as_ref().unwrap().bound))
        .min_by(|a, b| (a.2 - a.1).total_cmp(&(b.2 - b.1)));
    let s = secs(t);
    let sweep_line = Line {
        id: "c08",
        name: "uniform_uncorrelation",
        pass: !applicable.is_empty() && violations.is_empty(),
        infeasible: false,
        detail: format!(
            "level {top}: {} blocks x {} offsets x {} codes; bound applies at {}/{} n; violations at {violations:?}; \
             tightest (n, max|A|, bound) = {tightest:?}; {s:.1}s",
            sweep.blocks,
            sweep.offsets,
            sweep.codes,
            applicable.len(),
            sweep.entries.len()
        ),
    };

    let g = codes.codes.iter().find(|c| !c.is_constant()).unwrap();
    let n_max = *n_list.iter().max().unwrap();
    let x = sample_point(level, n_max + g.window(), f.cfg.seed).unwrap();
    let adversary = self_image(&x, g).unwrap();
    let r = uncorrelation_check(&x, &adversary, g, n_list, &h).unwrap();
    let applicable = r.entries.iter().filter(|e| e.applicable()).count();
    let caught = r.entries.iter().filter(|e| e.applicable() && !e.holds).count();
    let sensitivity = Line {
        id: "c08",
        name: "uncorrelation_detects_self_image",
        pass: applicable > 0 && caught == applicable,
        infeasible: false,
        detail: format!("y = f(x) for {g:?}: check fails at {caught}/{applicable} applicable n (A(n) = 1)"),
    };
    (sweep_line, sensitivity)
}

fn digest_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, sha256_hex(&std::fs::read(&path).unwrap()));
            }
        }
    }
    out
}

fn c09(f: &Fixture) -> Line {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_build(&f.cfg, a.path(), None).unwrap();
    cmd_build(&f.cfg, b.path(), None).unwrap();
    let (da, db) = (digest_tree(a.path()), digest_tree(b.path()));
    let differing: Vec<&String> = da
        .keys()
        .chain(db.keys())
        .filter(|k| da.get(*k) != db.get(*k))
        .collect();
    Line {
        id: "c09",
        name: "determinism",
        pass: !da.is_empty() && differing.is_empty(),
        infeasible: false,
        detail: format!(
            "two builds, seed {}: {} files each, differing: {differing:?}",
            f.cfg.seed,
            da.len()
        ),
    }
}

fn random_measure(rng: &mut ChaCha8Rng, depth: usize) -> EmpiricalMeasure {
    let tables = (1..=depth)
        .map(|n| (0..1usize << n).map(|_| rng.gen::<f64>()).collect())
        .collect();
    EmpiricalMeasure::from_tables(2, tables).unwrap()
}

fn c10() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let depth = 4;
    let (mut symmetry, mut triangle, mut identity) = (0usize, 0usize, 0usize);
    for i in 0..TRIPLES {
        let mu = random_measure(&mut rng, depth);
        // Every fourth triple repeats a measure to exercise d = 0.
        let nu = if i % 4 == 0 {
            mu.clone()
        } else {
            random_measure(&mut rng, depth)
        };
        let rho = random_measure(&mut rng, depth);
        let d = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| measure_distance(a, b, depth).unwrap().value;
        let same = (1..=depth).all(|n| mu.table(n) == nu.table(n));
        symmetry += (d(&mu, &nu) != d(&nu, &mu)) as usize;
        triangle += (d(&mu, &rho) > d(&mu, &nu) + d(&nu, &rho) + TRIANGLE_TOL) as usize;
        identity += ((d(&mu, &nu) == 0.0) != same) as usize + (d(&mu, &mu) != 0.0) as usize;
    }
    Line {
        id: "c10",
        name: "pseudometric",
        pass: symmetry + triangle + identity == 0,
        infeasible: false,
        detail: format!(
            "{TRIPLES} seeded triples at depth {depth}: {symmetry} symmetry, {triangle} triangle (tol {TRIANGLE_TOL:.0e}), {identity} identity violations"
        ),
    }
}

fn main() {
    let start = Instant::now();
    let mut lines = vec![c01(), c02()];
    let f = fixture();
    println!(
        "fixture: configs/desk.toml, {} levels built in {:.1}s, sizes {:?}",
        f.levels.len() - 1,
        f.build_time.as_secs_f64(),
        f.levels.iter().map(FamilyLevel::len).collect::<Vec<_>>()
    );
    lines.push(c03(&f));
    lines.push(c04(&f));
    lines.push(c04_literal(&f));
    lines.push(c05(&f));
    let (a, b) = c06(&f);
    lines.extend([a, b]);
    lines.push(c07(&f));
    let (a, b) = c08(&f);
    lines.extend([a, b]);
    lines.push(c09(&f));
    lines.push(c10());

    for l in &lines {
        println!(
            "{} {} {}: {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.name,
            l.detail
        );
    }
    let gating = lines.iter().filter(|l| !l.pass && !l.infeasible).count();
    let infeasible = lines.iter().filter(|l| !l.pass && l.infeasible).count();
    println!(
        "{} lines, {} pass, {gating} fail, {infeasible} infeasible by construction; {:.1}s",
        lines.len(),
        lines.iter().filter(|l| l.pass).count(),
        start.elapsed().as_secs_f64()
    );
    if gating > 0 {
        std::process::exit(1);
    }
}
