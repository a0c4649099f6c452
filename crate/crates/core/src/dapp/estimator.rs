//! Pilot-division OFDM periodogram and KPI extraction.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{DappError, SensingReport};
use crate::ofh::{BeamTable, IqBlock, WaveformConfig};
use crate::radio::SPEED_OF_LIGHT;

/// Cells within this many bins of the main peak (both axes) are excluded
/// from the second-peak search.
pub const PEAK_GUARD_BINS: usize = 2;

/// Delay-profile gate above the median noise floor, dB.
pub const SPREAD_NOISE_GATE_DB: f64 = 10.0;

/// Delay-profile gate below the peak, dB. Keeps interpolation sidelobes of a
/// single off-grid path out of the spread.
pub const SPREAD_PEAK_GATE_DB: f64 = 20.0;

/// Powers below `peak * PEAK_RELATIVE_FLOOR` are treated as numerical zero.
const PEAK_RELATIVE_FLOOR: f64 = 1e-12;

/// Absolute floor for dB conversion, i.e. -300 dB.
pub const POWER_FLOOR: f64 = 1e-30;

pub fn power_db(p: f64) -> f64 {
    10.0 * p.max(POWER_FLOOR).log10()
}

/// Squared-magnitude delay-Doppler map, row-major by delay bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    power: Vec<f64>,
    delay_bins: usize,
    doppler_bins: usize,
    /// Seconds per delay bin.
    pub delay_resolution: f64,
    /// Hz per Doppler bin.
    pub doppler_resolution: f64,
}

impl DelayDopplerMap {
    pub fn from_power(
        power: Vec<f64>,
        delay_bins: usize,
        doppler_bins: usize,
        delay_resolution: f64,
        doppler_resolution: f64,
    ) -> Self {
        assert_eq!(power.len(), delay_bins * doppler_bins);
        Self {
            power,
            delay_bins,
            doppler_bins,
            delay_resolution,
            doppler_resolution,
        }
    }

    pub fn delay_bins(&self) -> usize {
        self.delay_bins
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_bins
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn at(&self, delay: usize, doppler: usize) -> f64 {
        self.power[delay * self.doppler_bins + doppler]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.power
    }

    pub fn mean(&self) -> f64 {
        self.power.iter().sum::<f64>() / self.power.len() as f64
    }

    /// Global argmax as (delay bin, Doppler bin); first occurrence wins.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        self.argmax_where(|_, _| true)
    }

    /// Argmax over the bins for which `keep(delay, doppler)` holds.
    pub fn argmax_where(&self, keep: impl Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for d in 0..self.delay_bins {
            for m in 0..self.doppler_bins {
                if !keep(d, m) {
                    continue;
                }
                let p = self.at(d, m);
                if best.is_none_or(|(_, _, b)| p > b) {
                    best = Some((d, m, p));
                }
            }
        }
        best.map(|(d, m, _)| (d, m))
    }

    /// Doppler bin index to a signed bin in `[-M/2, M/2)`.
    pub fn signed_doppler(&self, m: usize) -> i64 {
        if 2 * m < self.doppler_bins {
            m as i64
        } else {
            m as i64 - self.doppler_bins as i64
        }
    }

    fn median(&self) -> f64 {
        let mut v = self.power.clone();
        let mid = v.len() / 2;
        let (_, median, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        *median
    }
}

/// FFT plans for one waveform geometry.
#[derive(Clone)]
pub struct Periodogram {
    cfg: WaveformConfig,
    subcarrier_fft: Arc<dyn Fft<f64>>,
    delay_ifft: Arc<dyn Fft<f64>>,
    doppler_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Periodogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Periodogram").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Periodogram {
    pub fn new(cfg: &WaveformConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            cfg: cfg.clone(),
            subcarrier_fft: planner.plan_fft_forward(cfg.fft_size),
            delay_ifft: planner.plan_fft_inverse(cfg.fft_size),
            doppler_fft: planner.plan_fft_forward(cfg.num_symbols),
        }
    }

    pub fn config(&self) -> &WaveformConfig {
        &self.cfg
    }

    /// CP removal, per-symbol DFT, division by the pilot grid, inverse DFT
    /// across subcarriers and DFT across symbols.
    pub fn compute(
        &self,
        block: &IqBlock,
        pilots: &[Vec<Complex64>],
    ) -> Result<DelayDopplerMap, DappError> {
        let cfg = &self.cfg;
        block.check_length(cfg)?;
        let n = cfg.fft_size;
        let m = cfg.num_symbols;
        if pilots.len() != m || pilots.iter().any(|row| row.len() != n) {
            return Err(DappError::PilotGridMismatch);
        }
        let sym_len = cfg.symbol_len();
        let fwd_scale = 1.0 / (n as f64).sqrt();
        let inv_scale = 1.0 / n as f64;

        // profiles[s][d]: per-symbol delay profile
        let mut profiles = vec![Complex64::new(0.0, 0.0); m * n];
        for s in 0..m {
            let start = s * sym_len + cfg.cp_length;
            let row = &mut profiles[s * n..(s + 1) * n];
            row.copy_from_slice(&block.samples[start..start + n]);
            self.subcarrier_fft.process(row);
            for (y, x) in row.iter_mut().zip(&pilots[s]) {
                *y = *y * fwd_scale / x;
            }
            self.delay_ifft.process(row);
            row.iter_mut().for_each(|v| *v *= inv_scale);
        }

        let doppler_scale = 1.0 / m as f64;
        let mut power = vec![0.0; n * m];
        let mut column = vec![Complex64::new(0.0, 0.0); m];
        for d in 0..n {
            for s in 0..m {
                column[s] = profiles[s * n + d];
            }
            self.doppler_fft.process(&mut column);
            for (k, v) in column.iter().enumerate() {
                power[d * m + k] = (v * doppler_scale).norm_sqr();
            }
        }

        Ok(DelayDopplerMap::from_power(
            power,
            n,
            m,
            cfg.delay_bin(),
            cfg.doppler_bin(),
        ))
    }
}

pub fn delay_doppler_map(
    block: &IqBlock,
    cfg: &WaveformConfig,
    pilots: &[Vec<Complex64>],
) -> Result<DelayDopplerMap, DappError> {
    Periodogram::new(cfg).compute(block, pilots)
}

/// Latest peak power per beam, for angular entropy over a sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AngularSweep {
    peaks: BTreeMap<u8, f64>,
}

impl AngularSweep {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, beam: u8, peak_power: f64) {
        self.peaks.insert(beam, peak_power);
    }

    pub fn clear(&mut self) {
        self.peaks.clear();
    }

    pub fn entropy(&self) -> f64 {
        angular_entropy(&self.peaks.values().copied().collect::<Vec<_>>())
    }
}

/// Shannon entropy in nats of the normalized power distribution.
pub fn angular_entropy(powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().filter(|p| **p > 0.0).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = powers
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    h.max(0.0)
}

/// 3-point parabolic vertex offset on log-power, clamped to half a bin.
fn parabolic_offset(left: f64, centre: f64, right: f64, floor: f64) -> f64 {
    let (l, c, r) = (
        left.max(floor).ln(),
        centre.max(floor).ln(),
        right.max(floor).ln(),
    );
    let denom = l - 2.0 * c + r;
    if !(denom < 0.0) {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateContext<'a> {
    pub cfg: &'a WaveformConfig,
    pub waveform_id: u16,
    pub beam_table: &'a BeamTable,
    pub beam_index: u8,
}

/// Extracts the KPI record from a map. The zero-delay row is reserved for
/// self-interference and excluded from the target search. `t0` and
/// `sequence_number` are left at zero for the caller to stamp.
pub fn estimate_kpis(
    map: &DelayDopplerMap,
    ctx: EstimateContext<'_>,
    sweep: &mut AngularSweep,
) -> Result<SensingReport, DappError> {
    if map.is_empty() {
        return Err(DappError::EmptyMap);
    }
    let n = map.delay_bins();
    let m = map.doppler_bins();
    let direction = ctx.beam_table.get(ctx.beam_index)?;

    let (pd, pm) = if n > 1 {
        map.argmax_where(|d, _| d != 0)
    } else {
        map.argmax()
    }
    .ok_or(DappError::EmptyMap)?;
    let peak = map.at(pd, pm);
    let floor = (peak * PEAK_RELATIVE_FLOOR).max(POWER_FLOOR);

    let delay_frac = if n >= 3 {
        parabolic_offset(
            map.at((pd + n - 1) % n, pm),
            peak,
            map.at((pd + 1) % n, pm),
            floor,
        )
    } else {
        0.0
    };
    let doppler_frac = if m >= 3 {
        parabolic_offset(
            map.at(pd, (pm + m - 1) % m),
            peak,
            map.at(pd, (pm + 1) % m),
            floor,
        )
    } else {
        0.0
    };

    let delay_s = ((pd as f64 + delay_frac) * map.delay_resolution).max(0.0);
    let doppler_hz = (map.signed_doppler(pm) as f64 + doppler_frac) * map.doppler_resolution;

    let second = map
        .argmax_where(|d, k| {
            d != 0
                && !(circular_distance(d, pd, n) <= PEAK_GUARD_BINS
                    && circular_distance(k, pm, m) <= PEAK_GUARD_BINS)
        })
        .map(|(d, k)| map.at(d, k))
        .unwrap_or(0.0);
    let confidence = if second <= floor {
        1.0
    } else {
        (peak / second - 1.0).clamp(0.0, 1.0)
    };

    let noise_floor = map.median();
    let gate = (noise_floor * 10f64.powf(SPREAD_NOISE_GATE_DB / 10.0))
        .max(peak * 10f64.powf(-SPREAD_PEAK_GATE_DB / 10.0));
    let (mut w, mut w_tau, mut w_tau2) = (0.0, 0.0, 0.0);
    for d in 1..n {
        let p = map.at(d, pm);
        if p > gate || d == pd {
            let tau = d as f64 * map.delay_resolution;
            w += p;
            w_tau += p * tau;
            w_tau2 += p * tau * tau;
        }
    }
    let multipath_spread_s = if w > 0.0 {
        let mean = w_tau / w;
        (w_tau2 / w - mean * mean).max(0.0).sqrt()
    } else {
        0.0
    };

    sweep.record(ctx.beam_index, peak);

    Ok(SensingReport {
        t0: 0,
        delay_s,
        range_m: SPEED_OF_LIGHT * delay_s / 2.0,
        doppler_hz,
        radial_velocity_mps: doppler_hz * SPEED_OF_LIGHT / (2.0 * ctx.cfg.carrier_frequency),
        aoa_azimuth_deg: direction.azimuth_deg,
        aoa_elevation_deg: direction.elevation_deg,
        echo_energy_db: power_db(peak),
        si_power_db: power_db(map.at(0, 0)),
        multipath_spread_s,
        angular_entropy: sweep.entropy(),
        confidence,
        beam_index: ctx.beam_index,
        waveform_id: ctx.waveform_id,
        sequence_number: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ofh::PilotPattern;

    fn cfg() -> WaveformConfig {
        WaveformConfig {
            fft_size: 256,
            cp_length: 64,
            subcarrier_spacing: 390_625.0,
            pilot_pattern: PilotPattern::Qpsk,
            carrier_frequency: 3.5e9,
            bandwidth: 100e6,
            num_symbols: 8,
        }
    }

    fn impulse_map(n: usize, m: usize, at: (usize, usize), cfg: &WaveformConfig) -> DelayDopplerMap {
        let mut p = vec![0.0; n * m];
        p[at.0 * m + at.1] = 1.0;
        DelayDopplerMap::from_power(p, n, m, cfg.delay_bin(), cfg.doppler_bin())
    }

    fn ctx<'a>(c: &'a WaveformConfig, beams: &'a BeamTable) -> EstimateContext<'a> {
        EstimateContext {
            cfg: c,
            waveform_id: 3,
            beam_table: beams,
            beam_index: 1,
        }
    }

    #[test]
    fn peak_at_bin_100_is_150_m() {
        let c = cfg();
        let beams = BeamTable::uniform_azimuth(4, -15.0, 10.0).unwrap();
        let map = impulse_map(256, 8, (100, 0), &c);
        let r = estimate_kpis(&map, ctx(&c, &beams), &mut AngularSweep::new()).unwrap();
        assert!((r.delay_s - 1.0e-6).abs() < 1e-18);
        assert!((r.range_m - 149.896229).abs() < 1e-6);
        assert!((r.range_m - 150.0).abs() <= 0.75);
        assert_eq!(r.radial_velocity_mps, 0.0);
        assert_eq!(r.aoa_azimuth_deg, -5.0);
        assert_eq!(r.waveform_id, 3);
        assert_eq!(r.multipath_spread_s, 0.0);
        assert_eq!(r.confidence, 1.0);
        assert_eq!(r.angular_entropy, 0.0);
        assert_eq!(r.echo_energy_db, 0.0);
        assert_eq!(r.si_power_db, -300.0);
    }

    #[test]
    fn negative_doppler_bins_are_signed() {
        let c = cfg();
        let beams = BeamTable::uniform_azimuth(4, -15.0, 10.0).unwrap();
        let map = impulse_map(256, 8, (20, 6), &c);
        let r = estimate_kpis(&map, ctx(&c, &beams), &mut AngularSweep::new()).unwrap();
        assert!((r.doppler_hz + 2.0 * c.doppler_bin()).abs() < 1e-9);
        assert!(r.radial_velocity_mps < 0.0);
    }

    #[test]
    fn zero_delay_row_is_not_a_target() {
        let c = cfg();
        let beams = BeamTable::uniform_azimuth(4, -15.0, 10.0).unwrap();
        let mut p = vec![0.0; 256 * 8];
        p[0] = 100.0;
        p[40 * 8] = 1.0;
        let map = DelayDopplerMap::from_power(p, 256, 8, c.delay_bin(), c.doppler_bin());
        let r = estimate_kpis(&map, ctx(&c, &beams), &mut AngularSweep::new()).unwrap();
        assert_eq!(r.delay_s, 40.0 * c.delay_bin());
        assert_eq!(r.si_power_db, 20.0);
    }

    #[test]
    fn parabolic_recovers_symmetric_vertex() {
        // log-parabola with vertex at +0.25
        let f = |x: f64| (-(x - 0.25f64).powi(2)).exp();
        let off = parabolic_offset(f(-1.0), f(0.0), f(1.0), 1e-30);
        assert!((off - 0.25).abs() < 1e-12);
        assert_eq!(parabolic_offset(1.0, 1.0, 1.0, 1e-30), 0.0);
    }

    #[test]
    fn confidence_from_second_peak() {
        let c = cfg();
        let beams = BeamTable::uniform_azimuth(4, -15.0, 10.0).unwrap();
        let mut p = vec![0.0; 256 * 8];
        p[50 * 8] = 1.5;
        p[120 * 8 + 3] = 1.0;
        // inside the guard, ignored
        p[51 * 8 + 1] = 1.4;
        let map = DelayDopplerMap::from_power(p, 256, 8, c.delay_bin(), c.doppler_bin());
        let r = estimate_kpis(&map, ctx(&c, &beams), &mut AngularSweep::new()).unwrap();
        assert!((r.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_paths_give_nonzero_spread() {
        let c = cfg();
        let beams = BeamTable::uniform_azimuth(4, -15.0, 10.0).unwrap();
        let mut p = vec![0.0; 256 * 8];
        p[10 * 8] = 1.0;
        p[30 * 8] = 1.0;
        let map = DelayDopplerMap::from_power(p, 256, 8, c.delay_bin(), c.doppler_bin());
        let r = estimate_kpis(&map, ctx(&c, &beams), &mut AngularSweep::new()).unwrap();
        // equal powers 20 bins apart: RMS spread is 10 bins
        assert!((r.multipath_spread_s - 10.0 * c.delay_bin()).abs() < 1e-15);
    }

    #[test]
    fn uniform_sweep_entropy_is_ln_b() {
        let mut s = AngularSweep::new();
        for b in 0..6 {
            s.record(b, 2.0);
        }
        assert!((s.entropy() - 6f64.ln()).abs() < 1e-12);
        assert_eq!(angular_entropy(&[3.0]), 0.0);
        assert_eq!(angular_entropy(&[]), 0.0);
        assert!(angular_entropy(&[1.0, 0.01]) < 2f64.ln());
    }

    #[test]
    fn empty_map_is_an_error() {
        let c = cfg();
        let beams = BeamTable::uniform_azimuth(4, -15.0, 10.0).unwrap();
        let map = DelayDopplerMap::from_power(Vec::new(), 0, 0, 1.0, 1.0);
        assert!(matches!(
            estimate_kpis(&map, ctx(&c, &beams), &mut AngularSweep::new()),
            Err(DappError::EmptyMap)
        ));
    }
}
