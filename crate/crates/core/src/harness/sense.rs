//! Sensing accuracy: full chain runs against scenes with known ground truth,
//! plus an echo-energy trigger check on an empty scene.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{write_json, HarnessConfig, HarnessError, Session};
use crate::control::XappError;
use crate::dapp::{SensingReport, TriggerConfig};
use crate::radio::{EchoScene, SPEED_OF_LIGHT};
use crate::stats::mean;

const REPORT_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub scene: String,
    pub trial: usize,
    /// Noise seed of the block behind this report.
    pub block_seed: u64,
    pub true_range_m: f64,
    pub est_range_m: f64,
    pub range_err_m: f64,
    pub true_velocity_mps: f64,
    pub est_velocity_mps: f64,
    pub velocity_err_mps: f64,
    pub confidence: f64,
    pub echo_energy_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneAccuracy {
    pub scene: String,
    pub trials: usize,
    pub range_rmse_m: f64,
    pub velocity_rmse_m: f64,
    /// Reports whose range error is within half a range bin.
    pub within_half_bin: usize,
    pub trigger_hits: u64,
    /// 1 when the scene has a target but no trigger fired.
    pub trigger_misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub noise_floor_db: f64,
    pub trigger_threshold_db: f64,
    pub calibration_reports: usize,
    /// Echo-energy triggers fired on the empty scene.
    pub false_alarms: u64,
    pub range_bin_m: f64,
    pub scenes: Vec<SceneAccuracy>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SenseOutput {
    pub summary: AccuracySummary,
    #[serde(skip)]
    pub rows: Vec<AccuracyRow>,
}

impl SenseOutput {
    pub fn write(&self, out_dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(out_dir)?;
        write_json(&out_dir.join("summary.json"), &self.summary)?;
        let mut w = csv::Writer::from_path(out_dir.join("accuracy.csv"))
            .map_err(std::io::Error::from)?;
        for row in &self.rows {
            w.serialize(row).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Periodic reports in generation order plus the number of event
/// indications seen while collecting them.
pub fn collect_reports(
    cfg: &HarnessConfig,
    scene: EchoScene,
    count: usize,
    trigger: Option<TriggerConfig>,
) -> Result<(Vec<SensingReport>, u64), HarnessError> {
    let mut session = Session::start(cfg, scene)?;
    // Periodic first: report k then comes from the k-th simulated block.
    let periodic = session.xapp.subscribe_periodic(cfg.sense.period_ms)?;
    let event = trigger.map(|t| session.xapp.subscribe_event(t)).transpose()?;
    let mut reports = Vec::with_capacity(count);
    let mut hits = 0;
    let mut tally = |r: crate::control::ReceivedReport, reports: &mut Vec<SensingReport>| {
        if r.subscription_id == periodic.subscription_id {
            if reports.len() < count {
                reports.push(r.report);
            }
        } else {
            hits += 1;
        }
    };
    while reports.len() < count {
        match session.xapp.recv_indication(Instant::now() + REPORT_TIMEOUT) {
            Ok(r) => tally(r, &mut reports),
            Err(XappError::Timeout) => {
                return Err(HarnessError::setup("dApp stopped reporting"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(e) = event {
        session.xapp.close(&e)?;
    }
    session.xapp.close(&periodic)?;
    for r in session.xapp.drain() {
        tally(r, &mut reports);
    }
    session.finish()?;
    Ok((reports, hits))
}

fn rmse(errs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = errs.map(|e| e * e).collect();
    mean(&v).unwrap_or(f64::NAN).sqrt()
}

pub fn load_scenes(cfg: &HarnessConfig) -> Result<Vec<(String, EchoScene)>, HarnessError> {
    if cfg.sense.scene_files.is_empty() {
        return Ok(vec![("config".into(), cfg.scene.clone())]);
    }
    cfg.sense
        .scene_files
        .iter()
        .map(|f| {
            let path = cfg.base_dir.join(f);
            let scene =
                EchoScene::load(&path).map_err(|e| HarnessError::SceneParse(e.to_string()))?;
            let name = f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, scene))
        })
        .collect()
}

pub fn run_sensing_accuracy(cfg: &HarnessConfig) -> Result<SenseOutput, HarnessError> {
    let s = &cfg.sense;
    if s.trials == 0 || s.calibration_reports == 0 {
        return Err(HarnessError::setup("sense needs trials and calibration reports"));
    }
    let scenes = load_scenes(cfg)?;
    let wf = cfg.waveform();
    let radio = cfg.radio()?;

    // Noise floor: mean reported echo energy with nothing in view.
    let empty = EchoScene {
        targets: Vec::new(),
        ..cfg.seeded_scene(&scenes[0].1)
    };
    let (calib, _) = collect_reports(cfg, empty.clone(), s.calibration_reports, None)?;
    let floor: Vec<f64> = calib.iter().map(|r| r.echo_energy_db).collect();
    let noise_floor_db = mean(&floor).expect("calibration_reports > 0");
    let threshold = noise_floor_db + s.threshold_margin_db;
    let trigger = TriggerConfig {
        echo_energy_threshold_db: Some(threshold),
        aoa_shift_threshold_deg: None,
    };
    let empty_run = EchoScene {
        seed: empty.seed.wrapping_add(1 << 32),
        ..empty
    };
    let (_, false_alarms) = collect_reports(cfg, empty_run, s.trials, Some(trigger))?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (name, scene) in scenes {
        let scene = cfg.seeded_scene(&scene);
        let (_, truth) = radio
            .apply_scene(&EchoScene { snr_db: f64::INFINITY, ..scene.clone() }, cfg.dapp.active_beam, 0)
            .map_err(|e| HarnessError::SceneParse(e.to_string()))?;
        let Some(strongest) = truth
            .targets
            .iter()
            .max_by(|a, b| a.echo_power.total_cmp(&b.echo_power))
            .copied()
        else {
            continue;
        };
        let true_range = strongest.delay_s * SPEED_OF_LIGHT / 2.0;
        let true_velocity = strongest.doppler_hz * SPEED_OF_LIGHT / (2.0 * wf.carrier_frequency);
        let (reports, hits) = collect_reports(cfg, scene.clone(), s.trials, Some(trigger))?;
        let scene_rows: Vec<AccuracyRow> = reports
            .iter()
            .enumerate()
            .map(|(k, r)| AccuracyRow {
                scene: name.clone(),
                trial: k,
                block_seed: scene.seed.wrapping_add(k as u64),
                true_range_m: true_range,
                est_range_m: r.range_m,
                range_err_m: r.range_m - true_range,
                true_velocity_mps: true_velocity,
                est_velocity_mps: r.radial_velocity_mps,
                velocity_err_mps: r.radial_velocity_mps - true_velocity,
                confidence: r.confidence,
                echo_energy_db: r.echo_energy_db,
            })
            .collect();
        let half_bin = wf.delay_bin() * SPEED_OF_LIGHT / 4.0;
        summaries.push(SceneAccuracy {
            scene: name,
            trials: scene_rows.len(),
            range_rmse_m: rmse(scene_rows.iter().map(|r| r.range_err_m)),
            velocity_rmse_m: rmse(scene_rows.iter().map(|r| r.velocity_err_mps)),
            within_half_bin: scene_rows
                .iter()
                .filter(|r| r.range_err_m.abs() <= half_bin)
                .count(),
            trigger_hits: hits,
            trigger_misses: u64::from(hits == 0),
        });
        rows.extend(scene_rows);
    }
    Ok(SenseOutput {
        summary: AccuracySummary {
            noise_floor_db,
            trigger_threshold_db: threshold,
            calibration_reports: calib.len(),
            false_alarms,
            range_bin_m: wf.delay_bin() * SPEED_OF_LIGHT / 2.0,
            scenes: summaries,
        },
        rows,
    })
}
