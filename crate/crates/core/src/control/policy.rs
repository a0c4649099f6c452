//! A1 ISAC policy: the non-RT layer's sensing directives and their
//! enforcement at the xApp.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dapp::TriggerConfig;
use crate::radio::wrap_degrees;

/// Sliding window for the temporal budget.
pub const BUDGET_WINDOW_NS: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy {policy_id}: {reason}")]
    Invalid { policy_id: String, reason: String },
    #[error("policy file: {0}")]
    Parse(String),
}

/// Azimuth interval, degrees, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub min_azimuth_deg: f64,
    pub max_azimuth_deg: f64,
}

impl Sector {
    pub fn contains(&self, azimuth_deg: f64) -> bool {
        let az = wrap_degrees(azimuth_deg);
        let az = if azimuth_deg == 180.0 { 180.0 } else { az };
        (self.min_azimuth_deg..=self.max_azimuth_deg).contains(&az)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1IsacPolicy {
    pub policy_id: String,
    /// Allowed steering sectors; empty means unrestricted.
    #[serde(default)]
    pub geographic_scope: Vec<Sector>,
    /// Sensing airtime allowed per second, ms.
    pub temporal_budget_ms_per_s: f64,
    pub sensing_priority: u8,
    /// Relative transmit-power cap in [0, 1].
    pub energy_limit: f64,
    pub min_period_ms: f64,
    pub max_period_ms: f64,
}

impl A1IsacPolicy {
    pub fn permissive(policy_id: impl Into<String>) -> Self {
        Self {
            policy_id: policy_id.into(),
            geographic_scope: Vec::new(),
            temporal_budget_ms_per_s: 1000.0,
            sensing_priority: 128,
            energy_limit: 1.0,
            min_period_ms: 1.0,
            max_period_ms: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |reason: String| {
            Err(PolicyError::Invalid {
                policy_id: self.policy_id.clone(),
                reason,
            })
        };
        if !(self.min_period_ms > 0.0 && self.min_period_ms.is_finite()) {
            return bad(format!("min_period_ms {} must be positive", self.min_period_ms));
        }
        if !(self.min_period_ms <= self.max_period_ms) || !self.max_period_ms.is_finite() {
            return bad(format!(
                "min_period_ms {} exceeds max_period_ms {}",
                self.min_period_ms, self.max_period_ms
            ));
        }
        if !(0.0..=1000.0).contains(&self.temporal_budget_ms_per_s) {
            return bad(format!(
                "temporal_budget_ms_per_s {} outside [0, 1000]",
                self.temporal_budget_ms_per_s
            ));
        }
        if !(0.0..=1.0).contains(&self.energy_limit) {
            return bad(format!("energy_limit {} outside [0, 1]", self.energy_limit));
        }
        for s in &self.geographic_scope {
            let in_range = |a: f64| (-180.0..=180.0).contains(&a);
            if !in_range(s.min_azimuth_deg)
                || !in_range(s.max_azimuth_deg)
                || s.min_azimuth_deg > s.max_azimuth_deg
            {
                return bad(format!(
                    "sector [{}, {}] invalid",
                    s.min_azimuth_deg, s.max_azimuth_deg
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PolicyError> {
        let p: Self = toml::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PolicyError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn in_scope(&self, azimuth_deg: f64) -> bool {
        self.geographic_scope.is_empty()
            || self.geographic_scope.iter().any(|s| s.contains(azimuth_deg))
    }
}

/// What the xApp wants to do, as seen by the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyRequest {
    /// Periodic subscription or SET_PERIOD.
    Period(f64),
    /// Event subscription or SET_TRIGGER.
    Trigger(TriggerConfig),
    Beam { beam_index: u8, azimuth_deg: f64 },
    Sic(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    BudgetExhausted,
    OutOfScope,
    InvalidValue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Accept,
    Clamp { requested: f64, clamped: f64 },
    Reject(RejectReason),
}

/// Pure and total: every (policy, budget, request) maps to one verdict.
pub fn enforce_policy(
    policy: &A1IsacPolicy,
    remaining_budget_ms: f64,
    request: &PolicyRequest,
) -> Verdict {
    if !(remaining_budget_ms > 0.0) {
        return Verdict::Reject(RejectReason::BudgetExhausted);
    }
    match *request {
        PolicyRequest::Period(p) => {
            if !(p > 0.0 && p.is_finite()) {
                return Verdict::Reject(RejectReason::InvalidValue);
            }
            let clamped = p.clamp(policy.min_period_ms, policy.max_period_ms);
            if clamped == p {
                Verdict::Accept
            } else {
                Verdict::Clamp {
                    requested: p,
                    clamped,
                }
            }
        }
        PolicyRequest::Trigger(t) => {
            let finite = |v: Option<f64>| v.is_none_or(f64::is_finite);
            if t.is_empty() || !finite(t.echo_energy_threshold_db) || !finite(t.aoa_shift_threshold_deg)
            {
                Verdict::Reject(RejectReason::InvalidValue)
            } else {
                Verdict::Accept
            }
        }
        PolicyRequest::Beam { azimuth_deg, .. } => {
            if !azimuth_deg.is_finite() {
                Verdict::Reject(RejectReason::InvalidValue)
            } else if policy.in_scope(azimuth_deg) {
                Verdict::Accept
            } else {
                Verdict::Reject(RejectReason::OutOfScope)
            }
        }
        PolicyRequest::Sic(_) => Verdict::Accept,
    }
}

/// Per-second sliding window of sensing airtime charges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BudgetWindow {
    charges: VecDeque<(u64, f64)>,
}

impl BudgetWindow {
    pub fn new() -> Self {
        Self::default()
    }

    fn expire(&mut self, now_ns: u64) {
        while let Some(&(t, _)) = self.charges.front() {
            if now_ns.saturating_sub(t) >= BUDGET_WINDOW_NS {
                self.charges.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn charge(&mut self, now_ns: u64, airtime_ms: f64) {
        self.expire(now_ns);
        self.charges.push_back((now_ns, airtime_ms));
    }

    pub fn used_ms(&mut self, now_ns: u64) -> f64 {
        self.expire(now_ns);
        self.charges.iter().map(|(_, ms)| ms).sum()
    }

    pub fn remaining_ms(&mut self, policy: &A1IsacPolicy, now_ns: u64) -> f64 {
        policy.temporal_budget_ms_per_s - self.used_ms(now_ns)
    }
}
