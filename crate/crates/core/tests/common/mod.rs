//! Oracles shared by the integration tests. None of them call into the
//! code they check.
#![allow(dead_code)]

use std::path::PathBuf;

use forge_core::config::RunConfig;

/// `mu(n)` by trial division.
pub fn trial_mobius(mut n: u64) -> i8 {
    if n == 1 {
        return 1;
    }
    let mut sign = 1i8;
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            n /= d;
            if n.is_multiple_of(d) {
                return 0;
            }
            sign = -sign;
        }
        d += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

/// Smallest `K >= 1` with `9 alpha base^(K-1) < 2^-(m+2)`, by bisection on
/// the monotone predicate evaluated with `powf`.
pub fn bisect_jump_index(m: u32, alpha: f64, base: f64) -> u32 {
    let ok = |k: u32| 9.0 * alpha * base.powf(k as f64 - 1.0) < 2f64.powf(-(m as f64 + 2.0));
    let (mut lo, mut hi) = (1u32, 1u32);
    while !ok(hi) {
        lo = hi;
        hi *= 2;
    }
    if ok(lo) {
        return lo;
    }
    // ok(hi) and !ok(lo).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn desk_config() -> RunConfig {
    RunConfig::load(repo_path("configs/desk.toml")).expect("configs/desk.toml parses")
}

/// A small variant of the desk config: two levels, few blocks.
pub fn small_config() -> RunConfig {
    let mut cfg = desk_config();
    cfg.schedule.caps.max_level = 2;
    // The jump and the Bernstein level sit at step 3, past the built levels.
    cfg.schedule.horizon = Some(3);
    cfg.schedule.caps.max_family = 60;
    cfg.schedule.desk_jumps = Some([("7".to_string(), 3)].into());
    cfg.schedule.desk_p = Some([("1".to_string(), 1)].into());
    cfg.checks.n_list = vec![30, 100, 200, 300, 1000];
    cfg
}
