//! Closed-loop latency breakdown at a fixed reporting period.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{write_json, HarnessConfig, HarnessError, Session};
use crate::clock::ns_to_ms;
use crate::control::{write_cdf_csv, LatencySample, TraceEntry, XappStats};
use crate::dapp::DappStats;
use crate::stats::{
    compliance_table, ecdf, percentile, ExperimentSummary, Percentiles, TrialMedians,
    PERCENTILE_METHOD,
};

const PROBE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownRow {
    pub trial: usize,
    pub sequence_number: u64,
    pub t0_ns: u64,
    pub t1_ns: u64,
    pub t_cmd_issue_ns: u64,
    pub t_cmd_applied_ns: u64,
    pub telemetry_ms: f64,
    pub control_ms: f64,
    pub closed_loop_ms: f64,
    /// Time between the indication arriving and the command leaving.
    pub xapp_ms: f64,
}

impl BreakdownRow {
    fn from_sample(trial: usize, s: &LatencySample) -> Option<Self> {
        Some(Self {
            trial,
            sequence_number: s.sequence_number,
            t0_ns: s.t0,
            t1_ns: s.t1,
            t_cmd_issue_ns: s.t_cmd_issue?,
            t_cmd_applied_ns: s.t_cmd_applied?,
            telemetry_ms: ns_to_ms(s.telemetry_ns()),
            control_ms: ns_to_ms(s.control_ns()?),
            closed_loop_ms: ns_to_ms(s.closed_loop_ns()?),
            xapp_ms: ns_to_ms(s.xapp_ns()?),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpBOutput {
    pub summary: ExperimentSummary,
    pub xapp: Vec<XappStats>,
    pub dapp: Vec<DappStats>,
    /// Every logged sample, probes and plain indications alike.
    #[serde(skip)]
    pub samples: Vec<LatencySample>,
    #[serde(skip)]
    pub breakdown: Vec<BreakdownRow>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

impl ExpBOutput {
    pub fn telemetry_ms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| ns_to_ms(s.telemetry_ns())).collect()
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(out_dir)?;
        write_json(&out_dir.join("summary.json"), self)?;
        let mut w = csv::Writer::from_path(out_dir.join("breakdown.csv"))
            .map_err(std::io::Error::from)?;
        for row in &self.breakdown {
            w.serialize(row).map_err(std::io::Error::from)?;
        }
        w.flush()?;

        let telemetry = ecdf(&self.telemetry_ms()).unwrap_or_default();
        let control: Vec<f64> = self.breakdown.iter().map(|r| r.control_ms).collect();
        let closed: Vec<f64> = self.breakdown.iter().map(|r| r.closed_loop_ms).collect();
        let control = ecdf(&control).unwrap_or_default();
        let closed = ecdf(&closed).unwrap_or_default();
        write_cdf_csv(
            &out_dir.join("latency_cdf.csv"),
            &[
                ("telemetry", &telemetry),
                ("control", &control),
                ("closed_loop", &closed),
            ],
        )?;
        Ok(())
    }
}

pub fn reference_values() -> Vec<(String, f64)> {
    [
        ("telemetry_median_ms", 3.9),
        ("telemetry_p95_ms", 10.2),
        ("control_median_ms", 0.7),
        ("closed_loop_median_ms", 4.6),
        ("vehicular_perception_compliance", 0.934),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn run_trial(
    cfg: &HarnessConfig,
    trial: usize,
    probes: usize,
) -> Result<(Vec<LatencySample>, Vec<TraceEntry>, XappStats, DappStats), HarnessError> {
    let mut scene = cfg.seeded_scene(&cfg.scene);
    scene.seed = scene.seed.wrapping_add((trial as u64) << 32);
    let mut session = Session::start(cfg, scene)?;
    let handle = session.xapp.subscribe_periodic(cfg.exp_b.period_ms)?;
    for _ in 0..probes {
        session.xapp.closed_loop_probe(Instant::now() + PROBE_TIMEOUT)?;
    }
    session.xapp.close(&handle)?;
    session.xapp.drain();
    let samples = session.xapp.log().snapshot();
    let trace = session.xapp.trace().to_vec();
    let (x, d) = session.finish()?;
    Ok((samples, trace, x, d))
}

pub fn run_experiment_b(cfg: &HarnessConfig) -> Result<ExpBOutput, HarnessError> {
    let b = &cfg.exp_b;
    if b.probes == 0 || b.trials == 0 {
        return Err(HarnessError::setup("exp_b needs at least one probe and one trial"));
    }
    let mut samples = Vec::new();
    let mut breakdown = Vec::new();
    let mut trace = Vec::new();
    let mut xapps = Vec::new();
    let mut dapps = Vec::new();
    let mut per_trial = Vec::new();
    for trial in 0..b.trials {
        let (s, t, x, d) = run_trial(cfg, trial, b.probes)?;
        let rows: Vec<BreakdownRow> =
            s.iter().filter_map(|s| BreakdownRow::from_sample(trial, s)).collect();
        let med = |f: fn(&BreakdownRow) -> f64| {
            percentile(&rows.iter().map(f).collect::<Vec<_>>(), 50.0).expect("probes > 0")
        };
        per_trial.push(TrialMedians {
            telemetry: med(|r| r.telemetry_ms),
            control: med(|r| r.control_ms),
            closed_loop: med(|r| r.closed_loop_ms),
        });
        samples.extend(s);
        breakdown.extend(rows);
        trace.extend(t);
        xapps.push(x);
        dapps.push(d);
    }

    let telemetry: Vec<f64> = samples.iter().map(|s| ns_to_ms(s.telemetry_ns())).collect();
    let control: Vec<f64> = breakdown.iter().map(|r| r.control_ms).collect();
    let closed: Vec<f64> = breakdown.iter().map(|r| r.closed_loop_ms).collect();
    let summary = ExperimentSummary {
        percentile_method: PERCENTILE_METHOD.into(),
        telemetry_ms: Percentiles::of(&telemetry).ok(),
        control_ms: Percentiles::of(&control).ok(),
        closed_loop_ms: Percentiles::of(&closed).ok(),
        compliance: compliance_table(&closed).map_err(HarnessError::setup)?,
        per_trial_medians_ms: per_trial,
        sequence_gaps: xapps.iter().map(|x| x.sequence_gaps).sum(),
        samples: samples.len(),
        reference_values: reference_values().into_iter().collect(),
        ..ExperimentSummary::default()
    };
    Ok(ExpBOutput {
        summary,
        xapp: xapps,
        dapp: dapps,
        samples,
        breakdown,
        trace,
    })
}
