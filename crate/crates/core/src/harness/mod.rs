//! Experiment orchestration: wires the simulated radio, the dApp, the
//! transport and the xApp together, runs a schedule and post-processes the
//! recorded samples.

pub mod exp_a;
pub mod exp_b;
pub mod sense;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::control::{A1IsacPolicy, XApp, XappError, XappStats};
use crate::dapp::{DappConfig, DappError, DappNode, DappStats, SimulatedSource};
use crate::ofh::{BeamTable, PilotPattern, WaveformConfig, WaveformTable};
use crate::radio::{EchoScene, Radio, Target};
use crate::transport::{Connection, Endpoint, Listener};

pub use exp_a::{run_experiment_a, ExpAOutput};
pub use exp_b::{run_experiment_b, ExpBOutput};
pub use sense::{run_sensing_accuracy, AccuracyRow, AccuracySummary, SenseOutput};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("setup failed: {0}")]
    SetupFailure(String),
    #[error("scene: {0}")]
    SceneParse(String),
    #[error(transparent)]
    Xapp(#[from] XappError),
    #[error(transparent)]
    Dapp(#[from] DappError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    fn setup(what: impl std::fmt::Display) -> Self {
        HarnessError::SetupFailure(what.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub count: usize,
    pub first_azimuth_deg: f64,
    pub step_deg: f64,
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self {
            count: 9,
            first_azimuth_deg: -40.0,
            step_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpAConfig {
    pub schedule_ms: Vec<f64>,
    pub segment_s: f64,
}

impl Default for ExpAConfig {
    fn default() -> Self {
        Self {
            schedule_ms: vec![100.0, 20.0, 10.0],
            segment_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpBConfig {
    pub period_ms: f64,
    /// Closed-loop probes per trial.
    pub probes: usize,
    pub trials: usize,
}

impl Default for ExpBConfig {
    fn default() -> Self {
        Self {
            period_ms: 10.0,
            probes: 5000,
            trials: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SenseConfig {
    /// Reports scored per scene.
    pub trials: usize,
    pub period_ms: f64,
    /// Echo-energy trigger threshold above the calibrated noise floor, dB.
    pub threshold_margin_db: f64,
    /// Empty-scene reports averaged into the noise floor.
    pub calibration_reports: usize,
    /// Scene files, relative to the config file. Empty means use `[scene]`.
    pub scene_files: Vec<PathBuf>,
}

impl Default for SenseConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            period_ms: 2.0,
            threshold_margin_db: 10.0,
            calibration_reports: 50,
            scene_files: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub transport: TransportKind,
    pub seed: u64,
    pub dapp: DappConfig,
    pub beams: BeamSpec,
    pub policy: A1IsacPolicy,
    pub scene: EchoScene,
    pub exp_a: ExpAConfig,
    pub exp_b: ExpBConfig,
    pub sense: SenseConfig,
    #[serde(skip)]
    pub waveforms: WaveformTable,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// 100 MHz at 3.5 GHz: 1.5 m range bins, 128-sample CP covering 192 m.
pub fn default_waveform() -> WaveformConfig {
    WaveformConfig {
        fft_size: 256,
        cp_length: 128,
        subcarrier_spacing: 390_625.0,
        pilot_pattern: PilotPattern::Qpsk,
        carrier_frequency: 3.5e9,
        bandwidth: 100e6,
        num_symbols: 64,
    }
}

pub fn default_policy() -> A1IsacPolicy {
    A1IsacPolicy {
        temporal_budget_ms_per_s: 500.0,
        ..A1IsacPolicy::permissive("default")
    }
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let dapp = DappConfig {
            active_beam: 4,
            ..DappConfig::default()
        };
        let mut waveforms = WaveformTable::new();
        waveforms
            .insert(dapp.waveform_id, default_waveform())
            .expect("default waveform is valid");
        Self {
            transport: TransportKind::Inproc,
            seed: 1,
            dapp,
            beams: BeamSpec::default(),
            policy: default_policy(),
            scene: EchoScene {
                snr_db: 20.0,
                ..EchoScene::single(Target {
                    range: 150.0,
                    radial_velocity: 0.0,
                    azimuth: 0.0,
                    amplitude: 1.0,
                })
            },
            exp_a: ExpAConfig::default(),
            exp_b: ExpBConfig::default(),
            sense: SenseConfig::default(),
            waveforms,
            base_dir: PathBuf::from("."),
        }
    }
}

impl HarnessConfig {
    /// Parses a config document. `[[waveform]]` tables, when present,
    /// replace the built-in waveform.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let mut cfg: Self = toml::from_str(text).map_err(HarnessError::setup)?;
        let doc: toml::Table = text.parse().map_err(HarnessError::setup)?;
        if doc.contains_key("waveform") {
            cfg.waveforms = WaveformTable::from_toml_str(text).map_err(HarnessError::setup)?;
        } else {
            cfg.waveforms = Self::default().waveforms;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::setup(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.dapp.validate()?;
        self.policy.validate().map_err(HarnessError::setup)?;
        self.waveforms
            .get(self.dapp.waveform_id)
            .map_err(HarnessError::setup)?;
        self.beam_table()?
            .get(self.dapp.active_beam)
            .map_err(HarnessError::setup)?;
        Ok(())
    }

    pub fn beam_table(&self) -> Result<BeamTable, HarnessError> {
        BeamTable::uniform_azimuth(
            self.beams.count,
            self.beams.first_azimuth_deg,
            self.beams.step_deg,
        )
        .map_err(HarnessError::setup)
    }

    pub fn waveform(&self) -> &WaveformConfig {
        self.waveforms
            .get(self.dapp.waveform_id)
            .expect("validated waveform id")
    }

    pub fn radio(&self) -> Result<Radio, HarnessError> {
        Radio::new(
            self.dapp.waveform_id,
            self.waveform().clone(),
            self.dapp.probe_seed,
            self.beam_table()?,
        )
        .map_err(HarnessError::setup)
    }

    /// Scene with the run seed applied.
    pub fn seeded_scene(&self, scene: &EchoScene) -> EchoScene {
        EchoScene {
            seed: self.seed,
            ..scene.clone()
        }
    }
}

/// A running dApp thread plus the xApp connected to it.
pub struct Session {
    pub xapp: XApp,
    dapp: JoinHandle<Result<DappStats, DappError>>,
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(0);

fn listen(kind: TransportKind) -> Result<Listener, HarnessError> {
    match kind {
        TransportKind::Inproc => Listener::bind(&Endpoint::in_process(format!(
            "isac-{}-{}",
            std::process::id(),
            SESSION_COUNTER.fetch_add(1, Ordering::Relaxed)
        ))),
        TransportKind::Tcp => Listener::bind_tcp_ephemeral(),
    }
    .map_err(HarnessError::setup)
}

impl Session {
    /// Starts a dApp sensing `scene` and connects an xApp to it.
    pub fn start(cfg: &HarnessConfig, scene: EchoScene) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let clock = Clock::new();
        let beams = cfg.beam_table()?;
        let source = SimulatedSource::new(cfg.radio()?, scene, cfg.dapp.sic_off_penalty_db);
        let node = DappNode::new(
            cfg.dapp.clone(),
            cfg.waveforms.clone(),
            beams.clone(),
            source,
            clock.clone(),
        )?;

        let listener = listen(cfg.transport)?;
        let endpoint = listener.endpoint().map_err(HarnessError::setup)?;
        let dapp = std::thread::Builder::new()
            .name("dapp".into())
            .spawn(move || {
                let conn = listener.accept(CONNECT_TIMEOUT)?;
                drop(listener);
                node.run(&conn)
            })?;
        let conn = Connection::connect(&endpoint, CONNECT_TIMEOUT).map_err(HarnessError::setup)?;
        let airtime_ms = cfg.waveform().burst_duration() * 1e3;
        let xapp = XApp::new(conn, clock, cfg.policy.clone(), beams, airtime_ms);
        Ok(Self { xapp, dapp })
    }

    /// Disconnects and waits for the dApp to wind down.
    pub fn finish(self) -> Result<(XappStats, DappStats), HarnessError> {
        let stats = self.xapp.stats().clone();
        drop(self.xapp.into_connection());
        let dapp = self
            .dapp
            .join()
            .map_err(|_| HarnessError::setup("dApp thread panicked"))??;
        Ok((stats, dapp))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(HarnessError::setup)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
