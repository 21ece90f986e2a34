//! Acoustic checks for any impulse response: Schroeder decay-time estimates
//! (broadband or per band) and direct-sound onset detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::ism::Rir;

pub const DEFAULT_FIT_RANGE_DB: (f64, f64) = (-5.0, -25.0);
pub const DEFAULT_ONSET_THRESHOLD_DB: f64 = -6.0;
pub const DEFAULT_ONSET_WINDOW_MS: f64 = 10.0;
/// Fits spanning less than this many dB are flagged as extrapolated.
pub const MIN_DECAY_RANGE_DB: f64 = 20.0;
/// Short-time energy at the end of the fit range must sit at least this far
/// below the loudest frame, otherwise the "decay" is just the integral
/// running out of samples.
const MIN_ENVELOPE_DROP_DB: f64 = 10.0;
const ENVELOPE_MS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t60_s: f64,
    pub slope_db_per_s: f64,
    pub intercept_db: f64,
    pub fit_range_db: (f64, f64),
    pub extrapolated: bool,
}

/// Backward-integrated energy in dB relative to total energy. Silent tails
/// map to `-inf`.
pub fn energy_decay_curve(x: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = x
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter_mut().for_each(|e| *e = 10.0 * (*e / total).log10());
    edc
}

fn check_audible(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::SilentInput);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite samples".into()));
    }
    Ok(())
}

/// Broadband Schroeder estimate over `fit_range_db` (upper, lower), e.g. (-5, -25).
pub fn schroeder_t60(x: &[f64], sample_rate_hz: u32, fit_range_db: (f64, f64)) -> Result<DecayFit> {
    check_audible(x)?;
    let (hi_db, lo_db) = fit_range_db;
    if !(hi_db <= 0.0 && lo_db < hi_db) {
        return Err(Error::InvalidParameter(format!("bad fit range {fit_range_db:?}")));
    }
    let insufficient = || Error::InsufficientDecay { target_db: lo_db };
    let edc = energy_decay_curve(x);
    let start = edc.iter().position(|&e| e <= hi_db).ok_or(Error::InsufficientDecay { target_db: hi_db })?;
    let end = edc.iter().position(|&e| e <= lo_db).ok_or_else(insufficient)?;

    let fs = f64::from(sample_rate_hz);
    let env = short_time_energy(x, ((ENVELOPE_MS * fs / 1000.0).round() as usize).max(1));
    let peak = env.iter().copied().fold(0.0, f64::max);
    if 10.0 * (env[end] / peak).log10() > -MIN_ENVELOPE_DROP_DB {
        return Err(insufficient());
    }

    let pts = &edc[start..=end];
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(insufficient());
    }
    let t_mean = (start + end) as f64 / 2.0 / fs;
    let y_mean = pts.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (k, &y) in pts.iter().enumerate() {
        let dt = (start + k) as f64 / fs - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(insufficient());
    }
    Ok(DecayFit {
        t60_s: -60.0 / slope,
        slope_db_per_s: slope,
        intercept_db: y_mean - slope * t_mean,
        fit_range_db,
        extrapolated: hi_db - lo_db < MIN_DECAY_RANGE_DB,
    })
}

/// Leading moving average of `x^2` over `win` samples (zero past the end).
fn short_time_energy(x: &[f64], win: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut acc = 0.0;
    for i in (0..x.len()).rev() {
        acc += x[i] * x[i];
        if i + win < x.len() {
            acc -= x[i + win] * x[i + win];
        }
        out[i] = acc.max(0.0) / win as f64;
    }
    out
}

/// Schroeder estimate of `rir`, optionally restricted to one filterbank band.
pub fn schroeder_t60_band(rir: &Rir, band: Option<usize>, bank: &FilterBank, fit_range_db: (f64, f64)) -> Result<DecayFit> {
    match band {
        None => schroeder_t60(&rir.samples, rir.sample_rate_hz, fit_range_db),
        Some(b) => {
            if b >= bank.num_bands() {
                return Err(Error::InvalidParameter(format!("band {b} out of range")));
            }
            if bank.spec.sample_rate_hz != rir.sample_rate_hz {
                return Err(Error::InvalidParameter("filterbank sample rate differs from RIR".into()));
            }
            schroeder_t60(&bank.branch(b).filter(&rir.samples), rir.sample_rate_hz, fit_range_db)
        }
    }
}

/// Earliest sample within `window_ms` before the global peak whose magnitude
/// is within `threshold_db` of the peak; the peak itself otherwise.
pub fn detect_onset(x: &[f64], sample_rate_hz: u32, threshold_db: f64, window_ms: f64) -> Result<usize> {
    check_audible(x)?;
    let peak = crate::ism::peak_index(x);
    let max = x[peak].abs();
    let threshold = max * 10f64.powf(threshold_db / 20.0);
    let window = (window_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize;
    let from = peak.saturating_sub(window);
    Ok((from..peak).find(|&i| x[i].abs() >= threshold).unwrap_or(peak))
}

pub fn detect_onset_default(x: &[f64], sample_rate_hz: u32) -> Result<usize> {
    detect_onset(x, sample_rate_hz, DEFAULT_ONSET_THRESHOLD_DB, DEFAULT_ONSET_WINDOW_MS)
}

/// Audit summary of one impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirReport {
    pub path: String,
    pub sample_rate_hz: u32,
    pub length_samples: usize,
    pub onset_sample: Option<usize>,
    pub t60_broadband_s: Option<f64>,
    pub t60_bands_s: Vec<Option<f64>>,
    pub extrapolated: bool,
    pub warnings: Vec<String>,
}

impl RirReport {
    /// Structural gate: finite, audible, onset found and every requested
    /// decay measurable.
    pub fn passes(&self) -> bool {
        self.onset_sample.is_some() && self.t60_broadband_s.is_some() && self.t60_bands_s.iter().all(Option::is_some)
    }
}

/// Onset plus broadband and per-band decay times. `bands` limits which
/// bands are measured (all when `None`).
pub fn analyze(rir: &Rir, bank: &FilterBank, bands: Option<&[usize]>, path: &str) -> RirReport {
    let mut warnings = Vec::new();
    let mut extrapolated = false;
    let mut note = |res: Result<DecayFit>, what: &str, warnings: &mut Vec<String>| match res {
        Ok(fit) => {
            extrapolated |= fit.extrapolated;
            Some(fit.t60_s)
        }
        Err(e) => {
            warnings.push(format!("{what}: {e}"));
            None
        }
    };
    let onset = match detect_onset_default(&rir.samples, rir.sample_rate_hz) {
        Ok(o) => Some(o),
        Err(e) => {
            warnings.push(format!("onset: {e}"));
            None
        }
    };
    let broadband = note(schroeder_t60_band(rir, None, bank, DEFAULT_FIT_RANGE_DB), "broadband", &mut warnings);
    let all: Vec<usize> = (0..bank.num_bands()).collect();
    let t60_bands_s = bands
        .unwrap_or(&all)
        .iter()
        .map(|&b| note(schroeder_t60_band(rir, Some(b), bank, DEFAULT_FIT_RANGE_DB), &format!("band {}", b + 1), &mut warnings))
        .collect();
    RirReport {
        path: path.to_string(),
        sample_rate_hz: rir.sample_rate_hz,
        length_samples: rir.samples.len(),
        onset_sample: onset,
        t60_broadband_s: broadband,
        t60_bands_s,
        extrapolated,
        warnings,
    }
}
