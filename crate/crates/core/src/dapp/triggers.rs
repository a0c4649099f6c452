use serde::{Deserialize, Serialize};

use super::SensingReport;
use crate::radio::wrap_degrees;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub echo_energy_threshold_db: Option<f64>,
    pub aoa_shift_threshold_deg: Option<f64>,
}

impl TriggerConfig {
    pub fn is_empty(&self) -> bool {
        self.echo_energy_threshold_db.is_none() && self.aoa_shift_threshold_deg.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerKind {
    EchoEnergy,
    AoaShift,
}

/// Echo energy fires on a threshold crossing in either direction; with no
/// previous report, being above the threshold counts as a crossing. AoA
/// shift fires when the wrapped azimuth change reaches the threshold.
pub fn evaluate_triggers(
    report: &SensingReport,
    prev: Option<&SensingReport>,
    trig: &TriggerConfig,
) -> Vec<TriggerKind> {
    let mut fired = Vec::new();
    if let Some(th) = trig.echo_energy_threshold_db {
        let above = |r: &SensingReport| r.echo_energy_db > th;
        let crossed = match prev {
            Some(p) => above(p) != above(report),
            None => above(report),
        };
        if crossed {
            fired.push(TriggerKind::EchoEnergy);
        }
    }
    if let (Some(th), Some(p)) = (trig.aoa_shift_threshold_deg, prev) {
        if wrap_degrees(report.aoa_azimuth_deg - p.aoa_azimuth_deg).abs() >= th {
            fired.push(TriggerKind::AoaShift);
        }
    }
    fired
}
