//! Periodicity control: the xApp steps the reporting period through a
//! schedule and the inter-arrival times are checked segment by segment.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{write_json, HarnessConfig, HarnessError, Session};
use crate::clock::ns_to_ms;
use crate::control::{enforce_policy, PolicyRequest, ReceivedReport, TraceEntry, Verdict, XappError, XappStats};
use crate::dapp::DappStats;
use crate::e2sm::AckStatus;
use crate::stats::{
    jitter_p95, mean, stdev, ExperimentSummary, Percentiles, SegmentSummary, PERCENTILE_METHOD,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterarrivalRow {
    pub sequence_number: u64,
    pub segment: usize,
    pub target_ms: f64,
    pub t0_ns: u64,
    pub t1_ns: u64,
    /// Since the previous report; empty for the first.
    pub interarrival_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodChange {
    pub period_ms: f64,
    pub issued_at_ns: u64,
    pub applied_at_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpAOutput {
    pub summary: ExperimentSummary,
    pub changes: Vec<PeriodChange>,
    pub xapp: XappStats,
    pub dapp: DappStats,
    #[serde(skip)]
    pub rows: Vec<InterarrivalRow>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

impl ExpAOutput {
    pub fn write(&self, out_dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(out_dir)?;
        write_json(&out_dir.join("summary.json"), self)?;
        let mut w = csv::Writer::from_path(out_dir.join("interarrival.csv"))
            .map_err(std::io::Error::from)?;
        for row in &self.rows {
            w.serialize(row).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Schedule periods must pass the policy unmodified.
fn check_schedule(cfg: &HarnessConfig) -> Result<(), HarnessError> {
    if cfg.exp_a.schedule_ms.is_empty() {
        return Err(HarnessError::setup("empty period schedule"));
    }
    if !(cfg.exp_a.segment_s > 0.0 && cfg.exp_a.segment_s.is_finite()) {
        return Err(HarnessError::setup(format!(
            "segment_s must be positive, got {}",
            cfg.exp_a.segment_s
        )));
    }
    let full = cfg.policy.temporal_budget_ms_per_s;
    for &p in &cfg.exp_a.schedule_ms {
        match enforce_policy(&cfg.policy, full, &PolicyRequest::Period(p)) {
            Verdict::Accept => {}
            v => return Err(XappError::PolicyViolation(v).into()),
        }
    }
    Ok(())
}

fn collect_until(
    session: &mut Session,
    deadline: Instant,
    out: &mut Vec<ReceivedReport>,
) -> Result<(), HarnessError> {
    loop {
        match session.xapp.recv_indication(deadline) {
            Ok(r) => out.push(r),
            Err(XappError::Timeout) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn run_experiment_a(cfg: &HarnessConfig) -> Result<ExpAOutput, HarnessError> {
    check_schedule(cfg)?;
    let schedule = &cfg.exp_a.schedule_ms;
    let segment = Duration::from_secs_f64(cfg.exp_a.segment_s);

    let mut session = Session::start(cfg, cfg.seeded_scene(&cfg.scene))?;
    let handle = session.xapp.subscribe_periodic(schedule[0])?;
    let mut received = Vec::new();
    let mut changes = Vec::new();
    for next in schedule.iter().skip(1) {
        collect_until(&mut session, Instant::now() + segment, &mut received)?;
        let out = session.xapp.set_period(*next)?;
        if out.status != AckStatus::Applied {
            return Err(HarnessError::setup(format!("dApp refused period {next} ms")));
        }
        changes.push(PeriodChange {
            period_ms: *next,
            issued_at_ns: out.issued_at,
            applied_at_ns: out.applied_at,
        });
    }
    collect_until(&mut session, Instant::now() + segment, &mut received)?;
    session.xapp.close(&handle)?;
    received.extend(session.xapp.drain());
    let trace = session.xapp.trace().to_vec();
    let (xapp, dapp) = session.finish()?;

    let rows = build_rows(&received, schedule, &changes);
    let segments = summarize_segments(&rows, schedule, &changes)?;
    let telemetry: Vec<f64> = rows.iter().map(|r| ns_to_ms(r.t1_ns - r.t0_ns)).collect();
    let summary = ExperimentSummary {
        percentile_method: PERCENTILE_METHOD.into(),
        segments,
        telemetry_ms: Percentiles::of(&telemetry).ok(),
        sequence_gaps: xapp.sequence_gaps,
        samples: rows.len(),
        reference_values: [
            ("interarrival_mean_error_ms".to_string(), 0.1),
            ("jitter_p95_ms_at_10ms".to_string(), 8.4),
        ]
        .into_iter()
        .collect(),
        ..ExperimentSummary::default()
    };
    Ok(ExpAOutput {
        summary,
        changes,
        xapp,
        dapp,
        rows,
        trace,
    })
}

/// A report belongs to the segment whose period was in force when it was
/// generated.
pub fn build_rows(
    received: &[ReceivedReport],
    schedule: &[f64],
    changes: &[PeriodChange],
) -> Vec<InterarrivalRow> {
    let mut prev_t1: Option<u64> = None;
    received
        .iter()
        .map(|r| {
            let segment = changes
                .iter()
                .take_while(|c| c.applied_at_ns <= r.report.t0)
                .count();
            let row = InterarrivalRow {
                sequence_number: r.report.sequence_number,
                segment,
                target_ms: schedule[segment],
                t0_ns: r.report.t0,
                t1_ns: r.t1,
                interarrival_ms: prev_t1.map(|p| ns_to_ms(r.t1.saturating_sub(p))),
            };
            prev_t1 = Some(r.t1);
            row
        })
        .collect()
}

/// Per-segment statistics. The interval spanning a period change is
/// excluded, as are leading intervals still closer to the old period.
pub fn summarize_segments(
    rows: &[InterarrivalRow],
    schedule: &[f64],
    changes: &[PeriodChange],
) -> Result<Vec<SegmentSummary>, HarnessError> {
    let mut out = Vec::with_capacity(schedule.len());
    for (s, &target) in schedule.iter().enumerate() {
        let in_seg: Vec<&InterarrivalRow> = rows.iter().filter(|r| r.segment == s).collect();
        let Some(first) = in_seg.first() else {
            return Err(HarnessError::setup(format!(
                "segment {s} ({target} ms) produced no reports"
            )));
        };
        let mut intervals: Vec<f64> = in_seg
            .iter()
            .skip(1)
            .filter_map(|r| r.interarrival_ms)
            .collect();
        let mut at_old = 0;
        let mut transition_ms = None;
        if s > 0 {
            let old = schedule[s - 1];
            at_old = intervals
                .iter()
                .take_while(|x| (**x - old).abs() < (**x - target).abs())
                .count();
            intervals.drain(..at_old);
            let applied = changes[s - 1].applied_at_ns;
            transition_ms = Some(ns_to_ms(first.t0_ns.saturating_sub(applied)));
        }
        if intervals.is_empty() {
            return Err(HarnessError::setup(format!(
                "segment {s} ({target} ms) has no steady-state intervals"
            )));
        }
        out.push(SegmentSummary {
            target_ms: target,
            reports: in_seg.len(),
            mean_interarrival_ms: mean(&intervals).expect("nonempty"),
            stdev_interarrival_ms: stdev(&intervals).expect("nonempty"),
            jitter_p95_ms: jitter_p95(&intervals, target).expect("nonempty"),
            reports_at_old_period: at_old,
            transition_ms,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dapp::SensingReport;

    fn rx(seq: u64, t_ms: u64) -> ReceivedReport {
        ReceivedReport {
            subscription_id: 1,
            report: SensingReport {
                t0: t_ms * 1_000_000,
                sequence_number: seq,
                ..SensingReport::default()
            },
            t1: t_ms * 1_000_000 + 50_000,
        }
    }

    #[test]
    fn segments_split_at_applied_time() {
        // 100 ms spacing, change applied at 250 ms, then 20 ms spacing.
        let times = [0, 100, 200, 270, 290, 310, 330];
        let received: Vec<_> = times.iter().enumerate().map(|(i, t)| rx(i as u64, *t)).collect();
        let schedule = [100.0, 20.0];
        let changes = [PeriodChange {
            period_ms: 20.0,
            issued_at_ns: 249_000_000,
            applied_at_ns: 250_000_000,
        }];
        let rows = build_rows(&received, &schedule, &changes);
        assert_eq!(rows.iter().filter(|r| r.segment == 0).count(), 3);
        assert_eq!(rows[0].interarrival_ms, None);
        let seg = summarize_segments(&rows, &schedule, &changes).unwrap();
        assert_eq!(seg[0].mean_interarrival_ms, 100.0);
        assert_eq!(seg[1].mean_interarrival_ms, 20.0);
        assert_eq!(seg[1].jitter_p95_ms, 0.0);
        assert_eq!(seg[1].reports_at_old_period, 0);
        assert_eq!(seg[1].transition_ms, Some(20.0));
    }

    #[test]
    fn sub_minimum_schedule_is_refused_before_traffic() {
        let mut cfg = HarnessConfig::default();
        cfg.policy.min_period_ms = 15.0;
        let err = run_experiment_a(&cfg).unwrap_err();
        assert!(matches!(
            err,
            HarnessError::Xapp(XappError::PolicyViolation(Verdict::Clamp { .. }))
        ));
    }
}
