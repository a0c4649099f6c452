//! DU-resident sensing pipeline.
//!
//! IQ blocks go through the delay-Doppler periodogram ([`estimator`]), the
//! KPI extractor and the trigger evaluator ([`triggers`]); [`node`] runs the
//! whole thing on a schedule and speaks E2SM-SENS to the xApp.

pub mod estimator;
pub mod node;
pub mod triggers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use estimator::{
    angular_entropy, delay_doppler_map, estimate_kpis, AngularSweep, DelayDopplerMap,
    EstimateContext, Periodogram,
};
pub use node::{BlockSource, DappNode, DappStats, SimulatedSource};
pub use triggers::{evaluate_triggers, TriggerConfig, TriggerKind};

use crate::ofh::OfhError;
use crate::radio::RadioError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum DappError {
    #[error("delay-Doppler map is empty")]
    EmptyMap,
    #[error("pilot grid does not match the waveform geometry")]
    PilotGridMismatch,
    #[error(transparent)]
    Ofh(#[from] OfhError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid dApp config: {0}")]
    InvalidConfig(String),
}

/// One E2SM-SENS KPI record. Field order is the wire order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SensingReport {
    /// Generation time at the dApp, ns.
    pub t0: u64,
    pub delay_s: f64,
    pub range_m: f64,
    pub doppler_hz: f64,
    pub radial_velocity_mps: f64,
    pub aoa_azimuth_deg: f64,
    pub aoa_elevation_deg: f64,
    pub echo_energy_db: f64,
    pub si_power_db: f64,
    /// RMS delay spread, s.
    pub multipath_spread_s: f64,
    /// nats.
    pub angular_entropy: f64,
    /// Peak-to-second-peak margin mapped into [0, 1].
    pub confidence: f64,
    pub beam_index: u8,
    pub waveform_id: u16,
    pub sequence_number: u64,
}

fn default_probe_seed() -> u64 {
    1
}

fn default_sic_penalty() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DappConfig {
    /// Sensing/reporting period, ms.
    pub report_period_ms: f64,
    pub active_beam: u8,
    pub sic_enabled: bool,
    pub waveform_id: u16,
    /// Seed of the pilot sequence shared with the radio.
    #[serde(default = "default_probe_seed")]
    pub probe_seed: u64,
    /// Extra self-interference seen while the canceller is off, dB.
    #[serde(default = "default_sic_penalty")]
    pub sic_off_penalty_db: f64,
}

impl DappConfig {
    pub fn validate(&self) -> Result<(), DappError> {
        if !(self.report_period_ms > 0.0 && self.report_period_ms.is_finite()) {
            return Err(DappError::InvalidConfig(format!(
                "report_period_ms must be positive, got {}",
                self.report_period_ms
            )));
        }
        Ok(())
    }
}

impl Default for DappConfig {
    fn default() -> Self {
        Self {
            report_period_ms: 10.0,
            active_beam: 0,
            sic_enabled: true,
            waveform_id: 1,
            probe_seed: default_probe_seed(),
            sic_off_penalty_db: default_sic_penalty(),
        }
    }
}
