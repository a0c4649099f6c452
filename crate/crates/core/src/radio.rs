//! Synthetic monostatic radio front end.
//!
//! Generates the OFDM probing burst, then builds the received echo as a sum
//! of delayed, Doppler-rotated, beam-weighted copies of the probe plus a
//! zero-delay residual self-interference term and complex white Gaussian
//! noise. Delays are circular within the burst; the fractional part is
//! applied as a phase ramp over the whole-burst spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ofh::{BeamTable, IqBlock, OfhError, PilotPattern, SensingMetadata, WaveformConfig};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const DEFAULT_BEAMWIDTH_DEG: f64 = 10.0;

/// Sidelobe floor of the beam pattern, -30 dB as a power ratio.
pub const SIDELOBE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("target {index}: round-trip delay {delay_s:e} s exceeds burst duration {burst_s:e} s")]
    DelayExceedsBurst {
        index: usize,
        delay_s: f64,
        burst_s: f64,
    },
    #[error("target {index}: {reason}")]
    InvalidTarget { index: usize, reason: String },
    #[error(transparent)]
    Ofh(#[from] OfhError),
    #[error("scene file: {0}")]
    SceneParse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Meters.
    pub range: f64,
    /// Meters per second, positive when receding.
    pub radial_velocity: f64,
    /// Degrees.
    pub azimuth: f64,
    /// Linear power gain of the echo.
    pub amplitude: f64,
}

impl Target {
    pub fn round_trip_delay(&self) -> f64 {
        2.0 * self.range / SPEED_OF_LIGHT
    }

    pub fn doppler(&self, carrier_frequency: f64) -> f64 {
        2.0 * self.radial_velocity * carrier_frequency / SPEED_OF_LIGHT
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn neg_infinite() -> f64 {
    f64::NEG_INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoScene {
    #[serde(default)]
    pub targets: Vec<Target>,
    /// SNR of the strongest echo in dB; `inf` disables noise.
    #[serde(default = "infinite")]
    pub snr_db: f64,
    /// Residual self-interference relative to the strongest echo, dB; `-inf` disables it.
    #[serde(default = "neg_infinite")]
    pub residual_si_power_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EchoScene {
    pub fn empty() -> Self {
        Self {
            targets: Vec::new(),
            snr_db: f64::INFINITY,
            residual_si_power_db: f64::NEG_INFINITY,
            seed: 0,
        }
    }

    pub fn single(target: Target) -> Self {
        Self {
            targets: vec![target],
            ..Self::empty()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RadioError> {
        toml::from_str(text).map_err(|e| RadioError::SceneParse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RadioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RadioError::SceneParse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub delay_s: f64,
    pub doppler_hz: f64,
    /// Beam power gain toward the target for the active beam.
    pub beam_gain: f64,
    /// Received echo power relative to the probe.
    pub echo_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub targets: Vec<TargetTruth>,
    pub noise_power: f64,
    pub si_power: f64,
}

/// Probing burst in both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    /// `num_symbols` rows of `fft_size` unit-magnitude pilots.
    pub grid: Vec<Vec<Complex64>>,
    /// CP-prefixed time-domain burst.
    pub samples: Vec<Complex64>,
}

impl Probe {
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

fn pilot_grid(cfg: &WaveformConfig, seed: u64) -> Vec<Vec<Complex64>> {
    let n = cfg.fft_size;
    match cfg.pilot_pattern {
        PilotPattern::Qpsk => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            (0..cfg.num_symbols)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            let bits: u8 = rand::Rng::random_range(&mut rng, 0..4);
                            let re = if bits & 1 == 0 { scale } else { -scale };
                            let im = if bits & 2 == 0 { scale } else { -scale };
                            Complex64::new(re, im)
                        })
                        .collect()
                })
                .collect()
        }
        PilotPattern::ZadoffChu => {
            // Odd roots are coprime with a power-of-two length.
            let half = (n / 2).max(1) as u64;
            let root = 2 * (seed % half) + 1;
            (0..cfg.num_symbols)
                .map(|s| {
                    (0..n)
                        .map(|k| {
                            let idx = ((k + s) % n) as u64;
                            let arg = (root * idx % (2 * n as u64)) * idx % (2 * n as u64);
                            Complex64::from_polar(1.0, -PI * arg as f64 / n as f64)
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Builds the probe grid and its CP-prefixed time-domain burst. The inverse
/// DFT is scaled by `1/sqrt(fft_size)` so the useful part has unit power.
pub fn generate_probe(cfg: &WaveformConfig, seed: u64) -> Probe {
    let grid = pilot_grid(cfg, seed);
    let n = cfg.fft_size;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut samples = Vec::with_capacity(cfg.burst_len());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for row in &grid {
        buf.copy_from_slice(row);
        ifft.process(&mut buf);
        buf.iter_mut().for_each(|x| *x *= scale);
        // Cyclic extension; a CP longer than the symbol wraps more than once.
        let cp = cfg.cp_length as isize;
        samples.extend((0..cp).map(|i| buf[(i - cp).rem_euclid(n as isize) as usize]));
        samples.extend_from_slice(&buf);
    }
    Probe { grid, samples }
}

/// Power gain of a Gaussian mainlobe with a -30 dB floor.
pub fn beam_gain(target_az: f64, beam_az: f64, beamwidth_deg: f64) -> f64 {
    let sigma = beamwidth_deg / 2.0;
    let delta = wrap_degrees(target_az - beam_az);
    (-(delta / sigma).powi(2)).exp().max(SIDELOBE_FLOOR)
}

/// Wraps an angle difference into [-180, 180).
pub fn wrap_degrees(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// The simulated radio unit: one waveform, one probe, one antenna pattern.
#[derive(Clone)]
pub struct Radio {
    pub waveform_id: u16,
    pub cfg: WaveformConfig,
    pub probe: Probe,
    pub beam_table: BeamTable,
    pub beamwidth_deg: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Radio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Radio")
            .field("waveform_id", &self.waveform_id)
            .field("cfg", &self.cfg)
            .field("beamwidth_deg", &self.beamwidth_deg)
            .finish_non_exhaustive()
    }
}

impl Radio {
    pub fn new(
        waveform_id: u16,
        cfg: WaveformConfig,
        probe_seed: u64,
        beam_table: BeamTable,
    ) -> Result<Self, RadioError> {
        cfg.validate(waveform_id)?;
        let probe = generate_probe(&cfg, probe_seed);
        let mut planner = FftPlanner::new();
        let len = cfg.burst_len();
        Ok(Self {
            waveform_id,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
            cfg,
            probe,
            beam_table,
            beamwidth_deg: DEFAULT_BEAMWIDTH_DEG,
        })
    }

    pub fn with_beamwidth(mut self, beamwidth_deg: f64) -> Self {
        self.beamwidth_deg = beamwidth_deg;
        self
    }

    /// Circularly delays `x` by `delay` (possibly fractional) samples.
    fn delayed(&self, x: &[Complex64], delay: f64) -> Vec<Complex64> {
        let len = x.len();
        let whole = delay.floor();
        let frac = delay - whole;
        let shift = (whole as usize) % len;
        let mut out: Vec<Complex64> = if frac == 0.0 {
            x.to_vec()
        } else {
            let mut spec = x.to_vec();
            self.fwd.process(&mut spec);
            for (i, bin) in spec.iter_mut().enumerate() {
                let f = if 2 * i < len {
                    i as f64
                } else {
                    i as f64 - len as f64
                } / len as f64;
                if 2 * i == len {
                    // Nyquist bin: keep the shifted signal real-symmetric.
                    *bin *= (PI * frac).cos();
                } else {
                    *bin *= Complex64::from_polar(1.0, -2.0 * PI * f * frac);
                }
            }
            self.inv.process(&mut spec);
            let norm = 1.0 / len as f64;
            spec.iter_mut().for_each(|v| *v *= norm);
            spec
        };
        out.rotate_right(shift);
        out
    }

    pub fn apply_scene(
        &self,
        scene: &EchoScene,
        beam: u8,
        tx_timestamp: u64,
    ) -> Result<(IqBlock, GroundTruth), RadioError> {
        let cfg = &self.cfg;
        let burst_s = cfg.burst_duration();
        let fs = cfg.sample_rate();
        let beam_az = self.beam_table.get(beam)?.azimuth_deg;
        let probe_power = self.probe.mean_power();

        let mut truths = Vec::with_capacity(scene.targets.len());
        for (index, t) in scene.targets.iter().enumerate() {
            if !(t.range >= 0.0) || !t.range.is_finite() {
                return Err(RadioError::InvalidTarget {
                    index,
                    reason: format!("range {} must be finite and >= 0", t.range),
                });
            }
            if !(t.amplitude >= 0.0) || !t.amplitude.is_finite() {
                return Err(RadioError::InvalidTarget {
                    index,
                    reason: format!("amplitude {} must be finite and >= 0", t.amplitude),
                });
            }
            let delay_s = t.round_trip_delay();
            if delay_s >= burst_s {
                return Err(RadioError::DelayExceedsBurst {
                    index,
                    delay_s,
                    burst_s,
                });
            }
            let gain = beam_gain(t.azimuth, beam_az, self.beamwidth_deg);
            truths.push(TargetTruth {
                delay_s,
                doppler_hz: t.doppler(cfg.carrier_frequency),
                beam_gain: gain,
                echo_power: t.amplitude * gain,
            });
        }

        let mut rx = vec![Complex64::new(0.0, 0.0); cfg.burst_len()];
        for truth in &truths {
            let scale = truth.echo_power.sqrt();
            if scale == 0.0 {
                continue;
            }
            let echo = self.delayed(&self.probe.samples, truth.delay_s * fs);
            let step = 2.0 * PI * truth.doppler_hz / fs;
            for (n, (acc, e)) in rx.iter_mut().zip(echo).enumerate() {
                *acc += e * Complex64::from_polar(scale, step * n as f64);
            }
        }

        let reference = truths
            .iter()
            .map(|t| t.echo_power * probe_power)
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))))
            .unwrap_or(probe_power);

        let si_power = reference * db_to_linear(scene.residual_si_power_db);
        if si_power > 0.0 {
            let si_scale = (si_power / probe_power).sqrt();
            for (acc, p) in rx.iter_mut().zip(&self.probe.samples) {
                *acc += p * si_scale;
            }
        }

        let noise_power = reference / db_to_linear(scene.snr_db);
        if noise_power > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(scene.seed, beam));
            let sigma = (noise_power / 2.0).sqrt();
            for acc in rx.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *acc += Complex64::new(re * sigma, im * sigma);
            }
        }

        let block = IqBlock {
            metadata: SensingMetadata {
                tx_timestamp,
                waveform_id: self.waveform_id,
                beam_index: beam,
                sensing_flag: true,
            },
            samples: rx,
            rx_timestamp: tx_timestamp,
        };
        Ok((
            block,
            GroundTruth {
                targets: truths,
                noise_power,
                si_power,
            },
        ))
    }
}

fn noise_seed(seed: u64, beam: u8) -> u64 {
    seed ^ (u64::from(beam) << 56)
}
