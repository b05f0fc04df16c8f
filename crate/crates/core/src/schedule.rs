//! Multipliers, jump indices and the parameter chain of the Bernstein levels.
//!
//! `m_k = M + #{m > M : K_m <= k}`, so `m_1 = M` and the multiplier steps up
//! by one at each jump index. Level `k` has length `N_k = m_1 * ... * m_k`.
//! Every inequality is a strict compare; the ones involving tiny powers are
//! evaluated on logarithms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::params;
use crate::report::Inequality;

const B_BASE: f64 = 8.0 / 9.0;
const B_PRIME_BASE: f64 = 8.5 / 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Small hand-picked jumps; the jump inequalities are reported only.
    #[default]
    Desk,
    /// Jumps derived from the inequalities, which then gate the exit code.
    Faithful,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Desk => "desk",
            Mode::Faithful => "faithful",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "desk" => Ok(Mode::Desk),
            "faithful" => Ok(Mode::Faithful),
            _ => Err(ForgeError::Config(format!("mode must be desk or faithful, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpRule {
    /// Base 8/9.
    #[serde(rename = "b")]
    B,
    /// Base 8.5/9.
    #[serde(rename = "b_prime")]
    BPrime,
}

impl JumpRule {
    pub fn base(self) -> f64 {
        match self {
            JumpRule::B => B_BASE,
            JumpRule::BPrime => B_PRIME_BASE,
        }
    }
}

/// `alpha(m)`, either constant or tabulated (last entry repeats).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alpha {
    Const(f64),
    Table(BTreeMap<u32, f64>),
}

impl Alpha {
    /// Parses `const:<v>`.
    pub fn parse(text: &str) -> Result<Alpha> {
        let v = text
            .strip_prefix("const:")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| ForgeError::Config(format!("alpha must be \"const:<v>\" or a table, got {text:?}")))?;
        let a = Alpha::Const(v);
        a.check()?;
        Ok(a)
    }

    fn check(&self) -> Result<()> {
        let ok = match self {
            Alpha::Const(v) => v.is_finite() && *v > 0.0,
            Alpha::Table(t) => !t.is_empty() && t.values().all(|v| v.is_finite() && *v > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(ForgeError::Config("alpha(m) must be finite and positive".into()))
        }
    }

    pub fn at(&self, m: u32) -> f64 {
        match self {
            Alpha::Const(v) => *v,
            Alpha::Table(t) => t
                .range(..=m)
                .next_back()
                .or_else(|| t.iter().next())
                .map(|(_, v)| *v)
                .expect("alpha tables are nonempty"),
        }
    }
}

/// A positive rule `k -> value` for `eps_k` or `delta_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRule {
    /// `c / ln(k + shift)`.
    LogDecay { c: f64, shift: f64 },
    /// `table[k - 1]`, the last entry repeating.
    Table(Vec<f64>),
}

impl DecayRule {
    pub fn at(&self, k: u32) -> f64 {
        match self {
            DecayRule::LogDecay { c, shift } => c / (k as f64 + shift).ln(),
            DecayRule::Table(t) => t[(k.max(1) as usize - 1).min(t.len() - 1)],
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let ok = match self {
            DecayRule::LogDecay { c, shift } => c.is_finite() && *c > 0.0 && shift.is_finite() && *shift > 1.0,
            DecayRule::Table(t) => !t.is_empty() && t.iter().all(|v| v.is_finite() && *v > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(ForgeError::Config(format!(
                "{name} must be positive (log decay needs c > 0 and shift > 1)"
            )))
        }
    }
}

/// `alpha` as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Text(String),
    Table(BTreeMap<String, f64>),
}

impl Default for AlphaSpec {
    fn default() -> Self {
        AlphaSpec::Text("const:1".into())
    }
}

impl AlphaSpec {
    pub fn resolve(&self) -> Result<Alpha> {
        match self {
            AlphaSpec::Text(t) => Alpha::parse(t),
            AlphaSpec::Table(t) => {
                let table = t
                    .iter()
                    .map(|(k, v)| Ok((parse_key(k, "alpha")?, *v)))
                    .collect::<Result<BTreeMap<u32, f64>>>()?;
                let a = Alpha::Table(table);
                a.check()?;
                Ok(a)
            }
        }
    }
}

fn parse_key(k: &str, table: &str) -> Result<u32> {
    k.trim()
        .parse()
        .map_err(|_| ForgeError::Config(format!("{table} keys must be integers, got {k:?}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    /// Highest level built; also the schedule horizon.
    pub max_level: u32,
    /// Passers kept per level in sampled mode.
    pub max_family: usize,
    /// Candidates tested per level; exhaustive enumeration runs when the
    /// full candidate space fits.
    pub max_candidates: u64,
}

fn default_c() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(rename = "N")]
    pub alphabet: usize,
    #[serde(rename = "M")]
    pub initial_multiplier: u32,
    #[serde(default)]
    pub alpha: AlphaSpec,
    #[serde(default = "default_c")]
    pub c_eps: f64,
    #[serde(default = "default_c")]
    pub c_delta: f64,
    /// Shift inside `c / ln(k + shift)`; defaults to e.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_shift: Option<f64>,
    /// Tabulated eps_k, replacing the log-decay rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_table: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_table: Option<Vec<f64>>,
    /// Target diameters `r(1) > r(2) > ...`.
    #[serde(default)]
    pub r: Vec<f64>,
    /// Desk-mode jump indices `m -> K_m` for `m > M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desk_jumps: Option<BTreeMap<String, u32>>,
    /// Desk-mode reference steps `j -> p(j)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desk_p: Option<BTreeMap<String, u32>>,
    /// Steps the schedule covers; defaults to `caps.max_level`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    pub caps: Caps,
}

impl ScheduleConfig {
    fn eps_rule(&self) -> DecayRule {
        match &self.eps_table {
            Some(t) => DecayRule::Table(t.clone()),
            None => DecayRule::LogDecay {
                c: self.c_eps,
                shift: self.eps_shift.unwrap_or(std::f64::consts::E),
            },
        }
    }

    fn delta_rule(&self) -> DecayRule {
        match &self.delta_table {
            Some(t) => DecayRule::Table(t.clone()),
            None => DecayRule::LogDecay {
                c: self.c_delta,
                shift: self.eps_shift.unwrap_or(std::f64::consts::E),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Closeness {
    pub n: usize,
    pub theta: f64,
}

/// Smallest `n` with `2^(1-n) < r/2`, and `theta = r / (2 N^n)`.
///
/// Cylinders of length `n` that agree to within `theta` put two measures
/// within `N^n theta + 2^(1-n) < r` of each other.
pub fn closeness_params(alphabet: usize, r: f64) -> Result<Closeness> {
    if !(r > 0.0 && r <= 2.0) {
        return Err(ForgeError::invalid(format!("r must lie in (0, 2], got {r}")));
    }
    let mut n = 1usize;
    while 2f64.powi(1 - n as i32) >= r / 2.0 {
        n += 1;
    }
    let theta = r / (2.0 * (alphabet as f64).powi(n as i32));
    Ok(Closeness { n, theta })
}

/// `ln(9 alpha base^(K-1))` against `ln(2^-(m+2))`.
pub fn jump_condition(m: u32, alpha_m: f64, rule: JumpRule, k: u32) -> Inequality {
    let lhs = 9f64.ln() + alpha_m.ln() + (k as f64 - 1.0) * rule.base().ln();
    let rhs = -((m as f64) + 2.0) * std::f64::consts::LN_2;
    let name = match rule {
        JumpRule::B => "jump_b",
        JumpRule::BPrime => "jump_b_prime",
    };
    Inequality::less(name, params! {"m" => m, "K" => k, "alpha" => alpha_m}, lhs, rhs).log_scale()
}

/// Minimal `K > after` with `9 alpha(m) base^(K-1) < 2^-(m+2)`.
pub fn jump_index(m: u32, alpha_m: f64, rule: JumpRule, after: u32) -> u32 {
    // Closed form on logs, then a step either way to settle rounding.
    let need = (-((m as f64) + 2.0) * std::f64::consts::LN_2 - 9f64.ln() - alpha_m.ln()) / rule.base().ln();
    let mut k = if need.is_finite() && need > 0.0 {
        (need.floor() as u32).saturating_add(1)
    } else {
        1
    };
    while k > 1 && jump_condition(m, alpha_m, rule, k - 1).holds {
        k -= 1;
    }
    while !jump_condition(m, alpha_m, rule, k).holds {
        k += 1;
    }
    k.max(after + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jump {
    pub m: u32,
    #[serde(rename = "K")]
    pub k: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSource {
    /// Smallest solution of the entropy and length conditions.
    Minimal,
    /// Supplied by `desk_p`.
    Override,
}

/// The parameter tuple of one Bernstein level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeLevel {
    pub j: u32,
    pub r: f64,
    pub n: usize,
    pub theta: f64,
    pub beta: f64,
    pub p: u32,
    pub m: u32,
    #[serde(rename = "K")]
    pub k: u32,
    pub p_source: PSource,
}

impl UeLevel {
    pub fn threshold(&self) -> f64 {
        (8.0 * self.beta).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(rename = "N")]
    pub alphabet: usize,
    #[serde(rename = "M")]
    pub initial_multiplier: u32,
    pub alpha: Alpha,
    pub eps: DecayRule,
    pub delta: DecayRule,
    pub horizon: u32,
    pub mode: Mode,
    pub jumps: Vec<Jump>,
    pub ue_levels: Vec<UeLevel>,
    /// Minimal (b') indices `m -> K` for `m = M ..= largest jump`, ignoring
    /// monotonicity; informational.
    pub minimal_b_prime: Vec<Jump>,
}

impl Schedule {
    pub fn multiplier(&self, k: u32) -> u32 {
        self.initial_multiplier + self.jumps.iter().filter(|j| j.k <= k).count() as u32
    }

    /// `N_k`, or `None` once it leaves `usize`.
    pub fn length(&self, k: u32) -> Option<usize> {
        (1..=k).try_fold(1usize, |acc, i| acc.checked_mul(self.multiplier(i) as usize))
    }

    pub fn ln_length(&self, k: u32) -> f64 {
        (1..=k).map(|i| (self.multiplier(i) as f64).ln()).sum()
    }

    pub fn reference_index(&self, k: u32) -> u32 {
        self.multiplier(k) - self.initial_multiplier
    }

    pub fn jump_step(&self, m: u32) -> Option<u32> {
        if m == self.initial_multiplier {
            return Some(1);
        }
        self.jumps.iter().find(|j| j.m == m).map(|j| j.k)
    }

    pub fn eps_plus_delta(&self, k: u32) -> f64 {
        self.eps.at(k) + self.delta.at(k)
    }

    pub fn ue_at(&self, k: u32) -> Option<&UeLevel> {
        self.ue_levels.iter().find(|u| u.k == k)
    }

    /// Every invariant and every inequality of the schedule.
    pub fn validate(&self) -> Vec<Inequality> {
        let faithful = self.mode == Mode::Faithful;
        let mut out = Vec::new();
        let m0 = self.initial_multiplier;

        let mut prev = Jump { m: m0, k: 1 };
        for j in &self.jumps {
            out.push(
                Inequality::greater(
                    "jump_strictly_increasing",
                    params! {"m" => j.m, "K" => j.k, "prev_m" => prev.m, "prev_K" => prev.k},
                    j.k as f64,
                    prev.k as f64,
                )
                .gating(true),
            );
            let contiguous = j.m == prev.m + 1;
            out.push(
                Inequality::new(
                    "jumps_contiguous",
                    params! {"m" => j.m, "prev_m" => prev.m},
                    j.m as f64,
                    (prev.m + 1) as f64,
                    contiguous,
                )
                .gating(true),
            );
            prev = *j;
        }

        // Rebuilding K_m from m_k reproduces the stored jumps.
        let mut rebuilt = Vec::new();
        let mut steps_ok = true;
        for k in 2..=self.horizon {
            let (a, b) = (self.multiplier(k - 1), self.multiplier(k));
            if b > a {
                steps_ok &= b == a + 1;
                rebuilt.push(Jump { m: b, k });
            }
        }
        let stored: Vec<Jump> = self.jumps.iter().copied().filter(|j| j.k <= self.horizon).collect();
        out.push(
            Inequality::new(
                "multiplier_reconstruction",
                params! {"horizon" => self.horizon, "jumps_in_horizon" => stored.len()},
                rebuilt.len() as f64,
                stored.len() as f64,
                steps_ok && rebuilt == stored,
            )
            .gating(true),
        );

        let worst_p = (1..=self.horizon)
            .map(|k| self.reference_index(k) as i64 - k as i64)
            .max()
            .unwrap_or(-1);
        out.push(
            Inequality::less(
                "reference_index_below_step",
                params! {"horizon" => self.horizon},
                worst_p as f64,
                0.0,
            )
            .gating(true)
            .with_note("max over k of p_k - k"),
        );

        for (name, rule) in [("eps", &self.eps), ("delta", &self.delta)] {
            let vals: Vec<f64> = (1..=self.horizon.max(1)).map(|k| rule.at(k)).collect();
            let positive = vals.iter().all(|&v| v > 0.0);
            let nonincreasing = vals.windows(2).all(|w| w[1] <= w[0]);
            out.push(
                Inequality::new(
                    format!("{name}_positive_nonincreasing"),
                    params! {"horizon" => self.horizon},
                    vals.iter().copied().fold(f64::INFINITY, f64::min),
                    0.0,
                    positive && nonincreasing,
                )
                .gating(true),
            );
        }

        for j in &self.jumps {
            let ineq = jump_condition(j.m, self.alpha.at(j.m), JumpRule::BPrime, j.k);
            out.push(ineq.gating(faithful));
        }
        for j in &self.minimal_b_prime {
            let ineq = jump_condition(j.m, self.alpha.at(j.m), JumpRule::BPrime, j.k);
            out.push(
                Inequality {
                    name: "jump_b_prime_minimal".into(),
                    ..ineq
                }
                .with_note("smallest K satisfying (b') on its own"),
            );
        }

        for u in &self.ue_levels {
            out.extend(self.validate_ue(u));
        }
        out
    }

    fn validate_ue(&self, u: &UeLevel) -> Vec<Inequality> {
        let faithful = self.mode == Mode::Faithful;
        let base = params! {"j" => u.j, "r" => u.r, "n" => u.n, "p" => u.p, "K" => u.k};
        let mut out = Vec::new();

        let expected_beta = u.theta * u.theta / 128.0;
        out.push(
            Inequality::new(
                "beta_definition",
                base.clone(),
                u.beta,
                expected_beta,
                u.beta == expected_beta,
            )
            .gating(true),
        );
        let lhs = u.threshold();
        let rhs = u.theta / 4.0;
        out.push(
            Inequality::new(
                "threshold_identity",
                base.clone(),
                lhs,
                rhs,
                (lhs - rhs).abs() <= f64::EPSILON * rhs,
            )
            .gating(true)
            .with_note("sqrt(8 beta) = theta / 4 within one ulp"),
        );
        let nt = (self.alphabet as f64).powi(u.n as i32) * u.theta + 2f64.powi(1 - u.n as i32);
        out.push(Inequality::less("closeness_contract", base.clone(), nt, u.r).gating(true));
        let jump_ok = self.jump_step(u.m) == Some(u.k);
        out.push(
            Inequality::new(
                "ue_step_is_jump",
                base.clone(),
                u.k as f64,
                self.jump_step(u.m).map_or(f64::NAN, |k| k as f64),
                jump_ok,
            )
            .gating(true),
        );
        let p_ok = u.k <= self.horizon && self.reference_index(u.k) == u.p && u.m == u.p + self.initial_multiplier;
        out.push(
            Inequality::new(
                "ue_reference_matches",
                base.clone(),
                u.p as f64,
                self.reference_index(u.k) as f64,
                p_ok,
            )
            .gating(true),
        );

        let (ent, len) = ent1_conditions(self, u.p, u.n, u.theta, u.beta);
        out.push(ent.gating(faithful));
        out.push(len.gating(faithful));
        if u.k > u.p {
            out.push(requirement_e(self, u, u.k).gating(faithful));
        }
        out
    }
}

/// `ln 2 / (m_p - 1) < beta` and `n / N_p < theta / 4`.
fn ent1_conditions(s: &Schedule, p: u32, n: usize, theta: f64, beta: f64) -> (Inequality, Inequality) {
    let m_p = s.multiplier(p);
    let lhs = if m_p > 1 {
        std::f64::consts::LN_2 / (m_p as f64 - 1.0)
    } else {
        f64::INFINITY
    };
    let ent = Inequality::less(
        "ent1_entropy",
        params! {"p" => p, "m_p" => m_p, "beta" => beta},
        lhs,
        beta,
    );
    let len = Inequality::less(
        "ent1_length",
        params! {"p" => p, "n" => n, "theta" => theta},
        (n as f64).ln() - s.ln_length(p),
        (theta / 4.0).ln(),
    )
    .log_scale();
    (ent, len)
}

/// `2 N^n exp(-beta m_p^(K-p)) < alpha(m) ((8.5/9)^(K-1) - (8/9)^(K-1))` at `K`.
///
/// Both sides are compared as logarithms; the right side is written as
/// `ln alpha + (K-1) ln(8.5/9) + ln(1 - (16/17)^(K-1))`.
pub fn requirement_e(s: &Schedule, u: &UeLevel, k: u32) -> Inequality {
    let m_p = s.multiplier(u.p) as f64;
    let steps = k as f64 - u.p as f64;
    let lhs = std::f64::consts::LN_2 + u.n as f64 * (s.alphabet as f64).ln() - u.beta * (steps * m_p.ln()).exp();
    let km1 = k as f64 - 1.0;
    let ratio = (km1 * (16f64 / 17.0).ln()).exp();
    let rhs = s.alpha.at(u.m).ln() + km1 * B_PRIME_BASE.ln() + (-ratio).ln_1p();
    Inequality::less(
        "requirement_e",
        params! {"j" => u.j, "p" => u.p, "m" => u.m, "K" => k},
        lhs,
        rhs,
    )
    .log_scale()
}

/// Result of checking (A') and (C') at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct APrimeReport {
    pub k: u32,
    pub sum: f64,
    pub bound: f64,
    pub holds: bool,
    pub c_prime: Vec<Inequality>,
}

/// `sum_{s=p_k+1}^{k-1} (1 - gamma'_s) < delta_k / 2`, plus (C') per term.
pub fn verify_a_prime(s: &Schedule, gammas: &BTreeMap<u32, f64>, k: u32) -> Result<APrimeReport> {
    let p = s.reference_index(k);
    let mut sum = 0.0;
    let mut c_prime = Vec::new();
    for step in p + 1..k {
        let g = *gammas
            .get(&step)
            .ok_or_else(|| ForgeError::invalid(format!("gamma'_{step} is needed for step {k} but missing")))?;
        sum += 1.0 - g;
        c_prime.push(gamma_lower_bound("c_prime", s, step, g, JumpRule::BPrime));
    }
    let bound = s.delta.at(k) / 2.0;
    Ok(APrimeReport {
        k,
        sum,
        bound,
        holds: sum < bound,
        c_prime,
    })
}

/// `gamma > 1 - alpha(m_s) base^(s-1)`.
pub fn gamma_lower_bound(name: &str, s: &Schedule, step: u32, gamma: f64, rule: JumpRule) -> Inequality {
    let m = s.multiplier(step);
    let bound = 1.0 - s.alpha.at(m) * rule.base().powi(step as i32 - 1);
    Inequality::greater(name, params! {"k" => step, "m_k" => m}, gamma, bound)
}

/// Computes the schedule, inductively in faithful mode or from the desk
/// overrides in desk mode.
pub fn build_schedule(cfg: &ScheduleConfig, mode: Mode) -> Result<Schedule> {
    if cfg.alphabet < 2 {
        return Err(ForgeError::Config(format!("N must be >= 2, got {}", cfg.alphabet)));
    }
    if cfg.initial_multiplier < 2 {
        return Err(ForgeError::Config(format!(
            "M must be >= 2, got {}",
            cfg.initial_multiplier
        )));
    }
    if cfg.caps.max_level == 0 {
        return Err(ForgeError::Config("caps.max_level must be >= 1".into()));
    }
    if cfg.caps.max_family == 0 {
        return Err(ForgeError::Config("caps.max_family must be >= 1".into()));
    }
    let horizon = cfg.horizon.unwrap_or(cfg.caps.max_level);
    if horizon < cfg.caps.max_level {
        return Err(ForgeError::Config(format!(
            "horizon {horizon} lies below caps.max_level = {}",
            cfg.caps.max_level
        )));
    }
    let alpha = cfg.alpha.resolve()?;
    let eps = cfg.eps_rule();
    let delta = cfg.delta_rule();
    eps.check("eps")?;
    delta.check("delta")?;
    for (i, &r) in cfg.r.iter().enumerate() {
        if !(r > 0.0 && r <= 2.0) {
            return Err(ForgeError::Config(format!("r({}) = {r} is outside (0, 2]", i + 1)));
        }
        if i > 0 && r >= cfg.r[i - 1] {
            return Err(ForgeError::Config(format!(
                "r must decrease strictly, but r({}) >= r({i})",
                i + 1
            )));
        }
    }

    let mut s = Schedule {
        alphabet: cfg.alphabet,
        initial_multiplier: cfg.initial_multiplier,
        alpha,
        eps,
        delta,
        horizon,
        mode,
        jumps: Vec::new(),
        ue_levels: Vec::new(),
        minimal_b_prime: Vec::new(),
    };

    match (&cfg.desk_jumps, mode) {
        (Some(_), Mode::Faithful) | (None, Mode::Faithful) if cfg.desk_p.is_some() => {
            return Err(ForgeError::Config("desk_p is a desk-mode override".into()));
        }
        (Some(_), Mode::Faithful) => {
            return Err(ForgeError::Config("desk_jumps is a desk-mode override".into()));
        }
        (Some(dj), Mode::Desk) => desk_schedule(&mut s, cfg, dj)?,
        (None, _) => faithful_schedule(&mut s, cfg)?,
    }

    let top = s.jumps.last().map_or(s.initial_multiplier, |j| j.m);
    s.minimal_b_prime = (s.initial_multiplier..=top)
        .map(|m| Jump {
            m,
            k: jump_index(m, s.alpha.at(m), JumpRule::BPrime, 0),
        })
        .collect();
    Ok(s)
}

fn desk_schedule(s: &mut Schedule, cfg: &ScheduleConfig, dj: &BTreeMap<String, u32>) -> Result<()> {
    let mut jumps = dj
        .iter()
        .map(|(m, &k)| {
            Ok(Jump {
                m: parse_key(m, "desk_jumps")?,
                k,
            })
        })
        .collect::<Result<Vec<Jump>>>()?;
    jumps.sort_by_key(|j| j.m);
    let mut prev = Jump {
        m: s.initial_multiplier,
        k: 1,
    };
    for j in &jumps {
        if j.m != prev.m + 1 {
            return Err(ForgeError::Schedule(format!(
                "desk_jumps must list m = {}, {}, ... without gaps; found m = {} after m = {}",
                s.initial_multiplier + 1,
                s.initial_multiplier + 2,
                j.m,
                prev.m
            )));
        }
        if j.k <= prev.k {
            return Err(ForgeError::Schedule(format!(
                "jump indices must increase strictly: K_{} = {} <= K_{} = {}",
                j.m, j.k, prev.m, prev.k
            )));
        }
        prev = *j;
    }
    s.jumps = jumps;

    let overrides = cfg
        .desk_p
        .iter()
        .flatten()
        .map(|(j, &p)| Ok((parse_key(j, "desk_p")?, p)))
        .collect::<Result<BTreeMap<u32, u32>>>()?;
    for (idx, &r) in cfg.r.iter().enumerate() {
        let j = idx as u32 + 1;
        let c = closeness_params(s.alphabet, r)?;
        let beta = c.theta * c.theta / 128.0;
        let (p, p_source) = match overrides.get(&j) {
            Some(&p) => (p, PSource::Override),
            None => {
                let p = minimal_reference(s, c, beta, s.horizon).ok_or_else(|| {
                    ForgeError::Schedule(format!(
                        "no p <= horizon {} satisfies the entropy and length conditions for r({j}) = {r}; \
                         supply desk_p",
                        s.horizon
                    ))
                })?;
                (p, PSource::Minimal)
            }
        };
        if p == 0 {
            return Err(ForgeError::Schedule(format!("p({j}) must be >= 1")));
        }
        let m = p + s.initial_multiplier;
        let k = s
            .jump_step(m)
            .ok_or_else(|| ForgeError::Schedule(format!("p({j}) = {p} needs K_{m} in desk_jumps")))?;
        if k > s.horizon {
            return Err(ForgeError::Schedule(format!(
                "K_{m} = {k} for r({j}) lies beyond the horizon caps.max_level = {}",
                s.horizon
            )));
        }
        if p >= k {
            return Err(ForgeError::Schedule(format!("p({j}) = {p} must be below K_{m} = {k}")));
        }
        s.ue_levels.push(UeLevel {
            j,
            r,
            n: c.n,
            theta: c.theta,
            beta,
            p,
            m,
            k,
            p_source,
        });
    }
    Ok(())
}

/// Smallest `p <= limit` satisfying the entropy and length conditions.
fn minimal_reference(s: &Schedule, c: Closeness, beta: f64, limit: u32) -> Option<u32> {
    minimal_reference_in(s, c, beta, 1, limit)
}

fn minimal_reference_in(s: &Schedule, c: Closeness, beta: f64, from: u32, to: u32) -> Option<u32> {
    (from..=to).find(|&p| {
        let (ent, len) = ent1_conditions(s, p, c.n, c.theta, beta);
        ent.holds && len.holds
    })
}

struct Pending {
    j: u32,
    r: f64,
    c: Closeness,
    beta: f64,
    p: Option<u32>,
}

/// Fixes `K_{M+1}, K_{M+2}, ...` in order. Before `K_m` is chosen every
/// reference step below it is known, so `p(j)` never depends on later jumps.
fn faithful_schedule(s: &mut Schedule, cfg: &ScheduleConfig) -> Result<()> {
    let mut pending = cfg
        .r
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let c = closeness_params(s.alphabet, r)?;
            Ok(Pending {
                j: i as u32 + 1,
                r,
                c,
                beta: c.theta * c.theta / 128.0,
                p: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scanned = 0u32;
    let scan = |s: &Schedule, pending: &mut [Pending], scanned: &mut u32, upto: u32| {
        if upto > *scanned {
            for pj in pending.iter_mut().filter(|pj| pj.p.is_none()) {
                pj.p = minimal_reference_in(s, pj.c, pj.beta, *scanned + 1, upto);
            }
            *scanned = upto;
        }
    };

    let horizon = s.horizon;
    let mut k_prev = 1u32;
    let mut m = s.initial_multiplier;
    loop {
        let next = m + 1;
        let base = jump_index(next, s.alpha.at(next), JumpRule::BPrime, k_prev);
        if base > horizon {
            break;
        }
        scan(s, &mut pending, &mut scanned, base - 1);
        let mut k = base;
        for pj in pending
            .iter()
            .filter(|pj| pj.p.map(|p| p + s.initial_multiplier) == Some(next))
        {
            let p = pj.p.unwrap();
            let probe = UeLevel {
                j: pj.j,
                r: pj.r,
                n: pj.c.n,
                theta: pj.c.theta,
                beta: pj.beta,
                p,
                m: next,
                k,
                p_source: PSource::Minimal,
            };
            while !requirement_e(s, &probe, k).holds {
                k += 1;
                if k > horizon {
                    return Err(ForgeError::Schedule(format!(
                        "requirement (E) for r({}) needs K_{next} beyond the schedule horizon {horizon}",
                        pj.j
                    )));
                }
            }
        }
        // Raising K_m extends the stretch where m_k = m; references found
        // there point at m + 2 or beyond, so no earlier choice changes.
        scan(s, &mut pending, &mut scanned, k - 1);
        s.jumps.push(Jump { m: next, k });
        k_prev = k;
        m = next;
    }
    scan(s, &mut pending, &mut scanned, horizon);

    for pj in pending {
        let p = pj.p.ok_or_else(|| {
            ForgeError::Schedule(format!(
                "no p <= horizon {horizon} satisfies the entropy and length conditions for r({}) = {}",
                pj.j, pj.r
            ))
        })?;
        let mj = p + s.initial_multiplier;
        let k = s.jump_step(mj).ok_or_else(|| {
            ForgeError::Schedule(format!(
                "r({}) needs K_{mj}, which lies beyond the schedule horizon {horizon}",
                pj.j
            ))
        })?;
        s.ue_levels.push(UeLevel {
            j: pj.j,
            r: pj.r,
            n: pj.c.n,
            theta: pj.c.theta,
            beta: pj.beta,
            p,
            m: mj,
            k,
            p_source: PSource::Minimal,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(max_level: u32) -> Caps {
        Caps {
            max_level,
            max_family: 10,
            max_candidates: 10,
        }
    }

    fn config(max_level: u32) -> ScheduleConfig {
        ScheduleConfig {
            alphabet: 2,
            initial_multiplier: 6,
            alpha: AlphaSpec::default(),
            c_eps: 0.05,
            c_delta: 0.05,
            eps_shift: None,
            eps_table: None,
            delta_table: None,
            r: vec![],
            desk_jumps: None,
            desk_p: None,
            horizon: None,
            caps: caps(max_level),
        }
    }

    #[test]
    fn closeness_examples() {
        assert_eq!(
            closeness_params(2, 0.5).unwrap(),
            Closeness {
                n: 4,
                theta: 1.0 / 64.0
            }
        );
        let c = closeness_params(2, 2.0).unwrap();
        assert_eq!(c.n, 2);
        assert_eq!(c.theta, 2.0 / 8.0);
        assert!(closeness_params(2, 0.0).is_err());
        assert!(closeness_params(2, 2.5).is_err());
    }

    #[test]
    fn jump_index_examples() {
        assert_eq!(jump_index(6, 1.0, JumpRule::BPrime, 0), 137);
        assert!(jump_index(6, 1.0, JumpRule::B, 0) < 137);
        assert_eq!(jump_index(6, 1.0, JumpRule::BPrime, 200), 201);
        assert!(jump_index(6, 2.0, JumpRule::BPrime, 0) > 137);
    }

    #[test]
    fn faithful_jumps_satisfy_b_prime() {
        let s = build_schedule(&config(400), Mode::Faithful).unwrap();
        assert!(!s.jumps.is_empty());
        assert_eq!(s.minimal_b_prime[0], Jump { m: 6, k: 137 });
        assert!(s.validate().iter().all(|i| i.holds), "{:?}", s.validate());
        assert_eq!(s.multiplier(1), 6);
    }

    #[test]
    fn desk_rejects_non_increasing_jumps() {
        let mut cfg = config(5);
        cfg.initial_multiplier = 5;
        cfg.desk_jumps = Some([("6".to_string(), 4), ("7".to_string(), 4)].into());
        match build_schedule(&cfg, Mode::Desk) {
            Err(ForgeError::Schedule(msg)) => assert!(msg.contains("K_7 = 4 <= K_6 = 4"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edited_schedule_fails_validation() {
        let mut cfg = config(5);
        cfg.desk_jumps = Some([("7".to_string(), 3)].into());
        let mut s = build_schedule(&cfg, Mode::Desk).unwrap();
        assert!(s.validate().iter().all(|i| !i.gate_failed()));
        s.jumps.push(Jump { m: 8, k: 3 });
        assert!(s
            .validate()
            .iter()
            .any(|i| i.name == "jump_strictly_increasing" && !i.holds));
    }

    #[test]
    fn a_prime_examples() {
        let mut cfg = config(10);
        cfg.desk_jumps = Some([("7".to_string(), 3), ("8".to_string(), 6)].into());
        let s = build_schedule(&cfg, Mode::Desk).unwrap();
        // p_6 = 2, so steps 3..=5 enter the sum.
        let ones: BTreeMap<u32, f64> = (1..10).map(|k| (k, 1.0)).collect();
        assert!(verify_a_prime(&s, &ones, 6).unwrap().holds);
        let mut one_off = ones.clone();
        one_off.insert(4, 1.0 - s.delta.at(6));
        assert!(!verify_a_prime(&s, &one_off, 6).unwrap().holds);
        assert!(verify_a_prime(&s, &BTreeMap::new(), 6).is_err());
    }

    #[test]
    fn decay_rules() {
        let t = DecayRule::Table(vec![0.3, 0.2]);
        assert_eq!(t.at(1), 0.3);
        assert_eq!(t.at(5), 0.2);
        let l = DecayRule::LogDecay { c: 0.1, shift: 2.0 };
        assert!((l.at(1) - 0.1 / 3f64.ln()).abs() < 1e-15);
    }
}
