//! Report records shared by the validators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type Params = BTreeMap<String, Value>;

/// Builds a [`Params`] map from `key => value` pairs.
#[macro_export]
macro_rules! params {
    () => { $crate::report::Params::new() };
    ($($k:expr => $v:expr),+ $(,)?) => {{
        let mut p = $crate::report::Params::new();
        $( p.insert(($k).to_string(), ::serde_json::json!($v)); )+
        p
    }};
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    /// Both sides are natural logarithms of the quantities compared.
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    /// An upper bound on a probability that is at least 1 says nothing.
    Vacuous,
}

/// One checked inequality `lhs <op> rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub params: Params,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub status: Status,
    pub gating: bool,
    pub scale: Scale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Inequality {
    pub fn new(name: impl Into<String>, params: Params, lhs: f64, rhs: f64, holds: bool) -> Self {
        Inequality {
            name: name.into(),
            params,
            lhs,
            rhs,
            holds,
            status: if holds { Status::Holds } else { Status::Fails },
            gating: false,
            scale: Scale::Linear,
            note: None,
        }
    }

    /// `lhs < rhs`.
    pub fn less(name: impl Into<String>, params: Params, lhs: f64, rhs: f64) -> Self {
        Self::new(name, params, lhs, rhs, lhs < rhs)
    }

    /// `lhs > rhs`.
    pub fn greater(name: impl Into<String>, params: Params, lhs: f64, rhs: f64) -> Self {
        Self::new(name, params, lhs, rhs, lhs > rhs)
    }

    /// `probability < bound`, vacuous when the bound is at least one.
    pub fn probability_below(name: impl Into<String>, params: Params, measured: f64, bound: f64) -> Self {
        let mut ineq = Self::less(name, params, measured, bound);
        if bound >= 1.0 {
            ineq.status = Status::Vacuous;
        }
        ineq
    }

    pub fn gating(mut self, gating: bool) -> Self {
        self.gating = gating;
        self
    }

    pub fn log_scale(mut self) -> Self {
        self.scale = Scale::Log;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn gate_failed(&self) -> bool {
        self.gating && !self.holds
    }
}

/// One verification result `measured` against `bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub params: Params,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
    pub slack: f64,
    pub gating: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(check: impl Into<String>, params: Params, measured: f64, bound: f64, holds: bool) -> Self {
        Check {
            check: check.into(),
            params,
            measured,
            bound,
            holds,
            slack: 0.0,
            gating: true,
            note: None,
        }
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    pub fn gating(mut self, gating: bool) -> Self {
        self.gating = gating;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn from_inequality(ineq: &Inequality) -> Self {
        Check {
            check: ineq.name.clone(),
            params: ineq.params.clone(),
            measured: ineq.lhs,
            bound: ineq.rhs,
            holds: ineq.holds,
            slack: 0.0,
            gating: ineq.gating,
            note: ineq.note.clone(),
        }
    }

    pub fn gate_failed(&self) -> bool {
        self.gating && !self.holds
    }
}
