//! Latency statistics with the reporting conventions used by the harness:
//! nearest-rank percentiles and strict `<` threshold compliance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PERCENTILE_METHOD: &str = "nearest-rank";

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("percentile {0} outside [0, 100]")]
    BadPercentile(f64),
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

fn rank_of(p: f64, n: usize) -> usize {
    // Multiply before dividing: 95 * 100 / 100 is exact, 0.95 * 100 is not.
    ((p * n as f64 / 100.0).ceil() as usize).clamp(1, n)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)` of the
/// ascending sort; `p = 0` gives the minimum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(StatsError::BadPercentile(p));
    }
    Ok(percentile_sorted(&sorted(values), p))
}

/// Same as [`percentile`] on already-sorted, nonempty input.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    sorted[rank_of(p, sorted.len()) - 1]
}

/// Fraction of values strictly below `threshold`.
pub fn compliance_fraction(latencies: &[f64], threshold: f64) -> Result<f64, StatsError> {
    if latencies.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let below = latencies.iter().filter(|v| **v < threshold).count();
    Ok(below as f64 / latencies.len() as f64)
}

/// p95 of `|x - target|`.
pub fn jitter_p95(inter_arrivals: &[f64], target: f64) -> Result<f64, StatsError> {
    let dev: Vec<f64> = inter_arrivals.iter().map(|x| (x - target).abs()).collect();
    percentile(&dev, 95.0)
}

/// Right-continuous empirical CDF: one `(value, F(value))` step per distinct value.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let v = sorted(values);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    Ok(out)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn stdev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some((values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
    pub count: usize,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let s = sorted(values);
        Ok(Self {
            p50: percentile_sorted(&s, 50.0),
            p95: percentile_sorted(&s, 95.0),
            p99: percentile_sorted(&s, 99.0),
            mean: mean(&s).expect("nonempty"),
            count: s.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub target_ms: f64,
    pub reports: usize,
    pub mean_interarrival_ms: f64,
    pub stdev_interarrival_ms: f64,
    pub jitter_p95_ms: f64,
    /// Reports after the period change still spaced like the old period.
    pub reports_at_old_period: usize,
    /// From the dApp applying the period change to the first report of the
    /// segment; `None` for the first segment.
    pub transition_ms: Option<f64>,
}

/// Medians of one trial, ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMedians {
    pub telemetry: f64,
    pub control: f64,
    pub closed_loop: f64,
}

/// Latency thresholds per use case, ms.
pub const USE_CASE_THRESHOLDS_MS: [(&str, f64); 4] = [
    ("vehicular_perception", 10.0),
    ("uav_tracking", 20.0),
    ("industrial_control", 1.0),
    ("beam_management", 5.0),
];

pub fn compliance_table(latencies_ms: &[f64]) -> Result<BTreeMap<String, f64>, StatsError> {
    USE_CASE_THRESHOLDS_MS
        .iter()
        .map(|(name, th)| Ok((name.to_string(), compliance_fraction(latencies_ms, *th)?)))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub percentile_method: String,
    pub segments: Vec<SegmentSummary>,
    pub telemetry_ms: Option<Percentiles>,
    pub control_ms: Option<Percentiles>,
    pub closed_loop_ms: Option<Percentiles>,
    pub compliance: BTreeMap<String, f64>,
    pub per_trial_medians_ms: Vec<TrialMedians>,
    pub sequence_gaps: u64,
    pub samples: usize,
    /// Values reported for the reference prototype, for side-by-side reading.
    pub reference_values: BTreeMap<String, f64>,
}
