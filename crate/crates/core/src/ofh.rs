//! Open-Fronthaul sensing metadata.
//!
//! Each uplink IQ block carries a 12-byte prefix that ties the echo to the
//! downlink transmission that caused it:
//!
//! ```text
//! byte 0      flags: bit 7 = sensing flag, bits 6..0 = zero padding
//! byte 1      beam index
//! bytes 2-3   waveform id (big-endian)
//! bytes 4-11  tx timestamp, ns since epoch (big-endian)
//! ```
//!
//! The waveform id indexes a [`WaveformTable`] holding the parameters the DU
//! needs to coherently process the echo (FFT size, CP, subcarrier spacing,
//! pilot pattern). The beam index resolves through a [`BeamTable`] to a
//! steering direction.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const METADATA_LEN: usize = 12;

const SENSING_FLAG_BIT: u8 = 0x80;
const PADDING_MASK: u8 = 0x7f;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfhError {
    #[error("metadata must be {METADATA_LEN} bytes, got {0}")]
    WrongLength(usize),
    #[error("nonzero padding bits in flags byte: {0:#04x}")]
    NonZeroPadding(u8),
    #[error("unknown waveform id {0}")]
    UnknownWaveformId(u16),
    #[error("invalid waveform {id}: {reason}")]
    InvalidWaveform { id: u16, reason: String },
    #[error("invalid beam {index}: {reason}")]
    InvalidBeam { index: u8, reason: String },
    #[error("unknown beam index {0}")]
    UnknownBeam(u8),
    #[error("sample count {got} does not match waveform (expected {expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SensingMetadata {
    pub tx_timestamp: u64,
    pub waveform_id: u16,
    pub beam_index: u8,
    pub sensing_flag: bool,
}

impl SensingMetadata {
    pub fn encode(&self) -> [u8; METADATA_LEN] {
        let mut out = [0u8; METADATA_LEN];
        out[0] = if self.sensing_flag { SENSING_FLAG_BIT } else { 0 };
        out[1] = self.beam_index;
        out[2..4].copy_from_slice(&self.waveform_id.to_be_bytes());
        out[4..12].copy_from_slice(&self.tx_timestamp.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, OfhError> {
        let bytes: &[u8; METADATA_LEN] = bytes
            .try_into()
            .map_err(|_| OfhError::WrongLength(bytes.len()))?;
        let flags = bytes[0];
        if flags & PADDING_MASK != 0 {
            return Err(OfhError::NonZeroPadding(flags));
        }
        Ok(Self {
            sensing_flag: flags & SENSING_FLAG_BIT != 0,
            beam_index: bytes[1],
            waveform_id: u16::from_be_bytes([bytes[2], bytes[3]]),
            tx_timestamp: u64::from_be_bytes(bytes[4..12].try_into().expect("8 bytes")),
        })
    }
}

/// Known probing-symbol sequence family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPattern {
    /// Seeded pseudo-random QPSK on every subcarrier of every symbol.
    Qpsk,
    /// Zadoff-Chu sequence with a seed-selected odd root, cyclically shifted per symbol.
    ZadoffChu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub fft_size: usize,
    pub cp_length: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    pub pilot_pattern: PilotPattern,
    /// Hz.
    pub carrier_frequency: f64,
    /// Hz. Must not exceed `fft_size * subcarrier_spacing`.
    pub bandwidth: f64,
    pub num_symbols: usize,
}

impl WaveformConfig {
    pub fn validate(&self, id: u16) -> Result<(), OfhError> {
        let bad = |reason: &str| {
            Err(OfhError::InvalidWaveform {
                id,
                reason: reason.to_string(),
            })
        };
        if self.fft_size == 0 || !self.fft_size.is_power_of_two() {
            return bad("fft_size must be a power of two");
        }
        if self.num_symbols == 0 {
            return bad("num_symbols must be at least 1");
        }
        if !(self.subcarrier_spacing > 0.0) || !self.subcarrier_spacing.is_finite() {
            return bad("subcarrier_spacing must be positive");
        }
        if !(self.carrier_frequency > 0.0) || !self.carrier_frequency.is_finite() {
            return bad("carrier_frequency must be positive");
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        // Relative slack so that e.g. 256 x 390.625 kHz == 100 MHz passes.
        if self.bandwidth > self.grid_span() * (1.0 + 1e-12) {
            return bad("bandwidth exceeds fft_size * subcarrier_spacing");
        }
        Ok(())
    }

    fn grid_span(&self) -> f64 {
        self.fft_size as f64 * self.subcarrier_spacing
    }

    /// Complex baseband sample rate, `fft_size * subcarrier_spacing`.
    pub fn sample_rate(&self) -> f64 {
        self.grid_span()
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_length
    }

    pub fn burst_len(&self) -> usize {
        self.num_symbols * self.symbol_len()
    }

    /// Symbol duration including the cyclic prefix, seconds.
    pub fn symbol_duration(&self) -> f64 {
        self.symbol_len() as f64 / self.sample_rate()
    }

    pub fn burst_duration(&self) -> f64 {
        self.num_symbols as f64 * self.symbol_duration()
    }

    pub fn delay_bin(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    pub fn doppler_bin(&self) -> f64 {
        1.0 / (self.num_symbols as f64 * self.symbol_duration())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WaveformTable {
    entries: BTreeMap<u16, WaveformConfig>,
}

#[derive(Deserialize)]
struct WaveformFile {
    waveform: Vec<WaveformEntry>,
}

#[derive(Deserialize)]
struct WaveformEntry {
    id: u16,
    #[serde(flatten)]
    config: WaveformConfig,
}

impl WaveformTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u16, cfg: WaveformConfig) -> Result<(), OfhError> {
        cfg.validate(id)?;
        self.entries.insert(id, cfg);
        Ok(())
    }

    pub fn with(mut self, id: u16, cfg: WaveformConfig) -> Result<Self, OfhError> {
        self.insert(id, cfg)?;
        Ok(self)
    }

    pub fn get(&self, id: u16) -> Result<&WaveformConfig, OfhError> {
        lookup_waveform(self, id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.entries.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses a TOML document containing `[[waveform]]` tables.
    pub fn from_toml_str(text: &str) -> Result<Self, OfhError> {
        let file: WaveformFile =
            toml::from_str(text).map_err(|e| OfhError::Config(e.to_string()))?;
        let mut table = Self::new();
        for entry in file.waveform {
            if table.entries.contains_key(&entry.id) {
                return Err(OfhError::Config(format!("duplicate waveform id {}", entry.id)));
            }
            table.insert(entry.id, entry.config)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, OfhError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OfhError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

pub fn lookup_waveform(table: &WaveformTable, id: u16) -> Result<&WaveformConfig, OfhError> {
    table.entries.get(&id).ok_or(OfhError::UnknownWaveformId(id))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringDirection {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeamTable {
    entries: BTreeMap<u8, SteeringDirection>,
}

impl BeamTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// `count` beams on the horizon, starting at `first_az` and spaced by `step`.
    pub fn uniform_azimuth(count: usize, first_az: f64, step: f64) -> Result<Self, OfhError> {
        let mut table = Self::new();
        for i in 0..count.min(256) {
            table.insert(
                i as u8,
                SteeringDirection {
                    azimuth_deg: first_az + step * i as f64,
                    elevation_deg: 0.0,
                },
            )?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, index: u8, dir: SteeringDirection) -> Result<(), OfhError> {
        if !(-180.0..=180.0).contains(&dir.azimuth_deg) {
            return Err(OfhError::InvalidBeam {
                index,
                reason: format!("azimuth {} outside [-180, 180]", dir.azimuth_deg),
            });
        }
        if !(-90.0..=90.0).contains(&dir.elevation_deg) {
            return Err(OfhError::InvalidBeam {
                index,
                reason: format!("elevation {} outside [-90, 90]", dir.elevation_deg),
            });
        }
        self.entries.insert(index, dir);
        Ok(())
    }

    pub fn get(&self, index: u8) -> Result<SteeringDirection, OfhError> {
        self.entries
            .get(&index)
            .copied()
            .ok_or(OfhError::UnknownBeam(index))
    }

    pub fn contains(&self, index: u8) -> bool {
        self.entries.contains_key(&index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, SteeringDirection)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

/// Unit of fronthaul transfer: metadata prefix plus baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBlock {
    pub metadata: SensingMetadata,
    pub samples: Vec<Complex64>,
    /// Receipt time at the DU, ns.
    pub rx_timestamp: u64,
}

impl IqBlock {
    pub fn check_length(&self, cfg: &WaveformConfig) -> Result<(), OfhError> {
        let expected = cfg.burst_len();
        if self.samples.len() != expected {
            return Err(OfhError::LengthMismatch {
                expected,
                got: self.samples.len(),
            });
        }
        Ok(())
    }

    /// Metadata prefix followed by interleaved I/Q as big-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(METADATA_LEN + 8 + self.samples.len() * 16);
        out.extend_from_slice(&self.metadata.encode());
        out.extend_from_slice(&self.rx_timestamp.to_be_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.re.to_be_bytes());
            out.extend_from_slice(&s.im.to_be_bytes());
        }
        out
    }
}

/// Raw IQ fronthaul rate in bit/s for complex Nyquist sampling at `bandwidth`.
pub fn fronthaul_rate(antennas_or_beams: u32, bandwidth_hz: f64, bits_per_component: u32) -> f64 {
    bandwidth_hz * 2.0 * f64::from(bits_per_component) * f64::from(antennas_or_beams)
}
