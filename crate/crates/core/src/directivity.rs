//! Source directivity tables (per-reflection gains) and receiver filter sets
//! (per-reflection directional filters).
//!
//! Table file: CSV with header `az_deg,el_deg,gain` and optionally six more
//! per-band columns `g125,g250,g500,g1k,g2k,g4k`; `#` lines are comments. The
//! rows must form a full azimuth x elevation grid with azimuths in
//! [-180, 180) and elevations in [-90, 90].
//!
//! Receiver filter index: CSV with header `az_deg,el_deg,path`, paths relative
//! to the index file, one mono audio file per direction.

use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::audio;
use crate::error::{Error, Result};
use crate::geom::{Orientation, Vec3};
use crate::ism::{check_length, Interp, ReflectionList, Rir};
use crate::params::{NUM_BANDS, SPEED_OF_SOUND};

const DEFAULT_SOURCE_TABLE: &str = include_str!("../data/default_source_directivity.csv");
pub const DEFAULT_SOURCE_LABEL: &str = "synthetic-forward-sqrt-cardioid (not measured speech)";

pub const SPHERE_LABEL: &str = "synthetic-sphere";
pub const SPHERE_DIRECTIONS: usize = 240;
pub const SPHERE_TAPS: usize = 128;
const HEAD_RADIUS_M: f64 = 0.0875;
const SPHERE_ALPHA_MIN: f64 = 0.1;
const SPHERE_THETA_MIN_DEG: f64 = 150.0;
const SPHERE_FFT_LEN: usize = 2048;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDirectivity(msg.into())
}

fn hex_digest(h: Sha256) -> String {
    format!("{:x}", h.finalize())
}

/// Gain lookup on an azimuth x elevation grid, nearest node.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectivityTable {
    pub azimuth_grid_deg: Vec<f64>,
    pub elevation_grid_deg: Vec<f64>,
    /// Broadband gains, azimuth-major: `gains[ia * n_el + ie]`.
    pub gains: Vec<f64>,
    pub band_gains: Option<Vec<[f64; NUM_BANDS]>>,
    pub label: String,
}

#[derive(Debug, Deserialize)]
struct TableRow {
    az_deg: f64,
    el_deg: f64,
    gain: f64,
    #[serde(default)]
    g125: Option<f64>,
    #[serde(default)]
    g250: Option<f64>,
    #[serde(default)]
    g500: Option<f64>,
    #[serde(default)]
    g1k: Option<f64>,
    #[serde(default)]
    g2k: Option<f64>,
    #[serde(default)]
    g4k: Option<f64>,
}

impl TableRow {
    fn bands(&self) -> Option<[f64; NUM_BANDS]> {
        Some([self.g125?, self.g250?, self.g500?, self.g1k?, self.g2k?, self.g4k?])
    }
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

impl DirectivityTable {
    pub fn parse(text: &str, label: &str) -> Result<DirectivityTable> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let rows: Vec<TableRow> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("{label}: {e}")))?;
        Self::from_rows(&rows, label)
    }

    pub fn load(path: &Path) -> Result<DirectivityTable> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The bundled forward-facing placeholder pattern.
    pub fn default_source() -> DirectivityTable {
        Self::parse(DEFAULT_SOURCE_TABLE, DEFAULT_SOURCE_LABEL).expect("bundled table is valid")
    }

    /// `gain(az, el)` sampled on a regular grid with `step_deg` spacing.
    pub fn from_fn(step_deg: f64, label: &str, gain: impl Fn(f64, f64) -> f64) -> Result<DirectivityTable> {
        if !(step_deg > 0.0 && step_deg <= 180.0) {
            return Err(invalid("grid step must lie in (0, 180]"));
        }
        let n_az = (360.0 / step_deg).round() as usize;
        let n_el = (180.0 / step_deg).round() as usize + 1;
        let mut rows = Vec::with_capacity(n_az * n_el);
        for ia in 0..n_az {
            for ie in 0..n_el {
                let az = -180.0 + ia as f64 * step_deg;
                let el = (-90.0 + ie as f64 * step_deg).min(90.0);
                rows.push(TableRow {
                    az_deg: az,
                    el_deg: el,
                    gain: gain(az, el),
                    g125: None,
                    g250: None,
                    g500: None,
                    g1k: None,
                    g2k: None,
                    g4k: None,
                });
            }
        }
        Self::from_rows(&rows, label)
    }

    /// All-ones table; weighting by it changes nothing.
    pub fn omni() -> DirectivityTable {
        Self::from_fn(5.0, "omni", |_, _| 1.0).expect("valid grid")
    }

    /// `((1 + cos psi) / 2)^power` with psi the angle off the forward axis.
    pub fn cardioid(power: f64, step_deg: f64) -> Result<DirectivityTable> {
        Self::from_fn(step_deg, &format!("cardioid^{power}"), |az, el| {
            let c = el.to_radians().cos() * az.to_radians().cos();
            ((1.0 + c) / 2.0).max(0.0).powf(power)
        })
    }

    fn from_rows(rows: &[TableRow], label: &str) -> Result<DirectivityTable> {
        if rows.is_empty() {
            return Err(invalid(format!("{label}: empty table")));
        }
        let az = sorted_unique(rows.iter().map(|r| r.az_deg));
        let el = sorted_unique(rows.iter().map(|r| r.el_deg));
        if az.iter().any(|a| !(-180.0..180.0).contains(a)) {
            return Err(invalid(format!("{label}: azimuths must lie in [-180, 180)")));
        }
        if el.iter().any(|e| !(-90.0..=90.0).contains(e)) {
            return Err(invalid(format!("{label}: elevations must lie in [-90, 90]")));
        }
        if rows.len() != az.len() * el.len() {
            return Err(invalid(format!(
                "{label}: {} rows do not form a full {}x{} grid",
                rows.len(),
                az.len(),
                el.len()
            )));
        }
        let per_band = rows[0].bands().is_some();
        if rows.iter().any(|r| r.bands().is_some() != per_band) {
            return Err(invalid(format!("{label}: per-band columns must be all present or all absent")));
        }
        let mut gains = vec![f64::NAN; rows.len()];
        let mut band_gains = per_band.then(|| vec![[f64::NAN; NUM_BANDS]; rows.len()]);
        for r in rows {
            let ia = az.binary_search_by(|a| a.total_cmp(&r.az_deg)).expect("grid value");
            let ie = el.binary_search_by(|e| e.total_cmp(&r.el_deg)).expect("grid value");
            let slot = ia * el.len() + ie;
            if !gains[slot].is_nan() {
                return Err(invalid(format!("{label}: duplicate node ({}, {})", r.az_deg, r.el_deg)));
            }
            let mut values = vec![r.gain];
            if let (Some(bg), Some(b)) = (band_gains.as_mut(), r.bands()) {
                bg[slot] = b;
                values.extend(b);
            }
            if values.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(invalid(format!("{label}: gains must be finite and non-negative")));
            }
            gains[slot] = r.gain;
        }
        Ok(DirectivityTable {
            azimuth_grid_deg: az,
            elevation_grid_deg: el,
            gains,
            band_gains,
            label: label.to_string(),
        })
    }

    pub fn is_per_band(&self) -> bool {
        self.band_gains.is_some()
    }

    pub fn is_identity(&self) -> bool {
        self.gains.iter().all(|g| *g == 1.0)
            && self
                .band_gains
                .as_ref()
                .is_none_or(|b| b.iter().flatten().all(|g| *g == 1.0))
    }

    /// Nearest grid node `(ia, ie)`: circular in azimuth, linear in
    /// elevation, ties toward the smaller grid value.
    pub fn nearest_node(&self, dir: Vec3) -> (usize, usize) {
        let (az, el) = dir.to_angles_deg();
        let pick = |grid: &[f64], dist: &dyn Fn(f64) -> f64| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &g) in grid.iter().enumerate() {
                let d = dist(g);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            best
        };
        let ia = pick(&self.azimuth_grid_deg, &|g| circular_distance_deg(az, g));
        let ie = pick(&self.elevation_grid_deg, &|g| (el - g).abs());
        (ia, ie)
    }

    pub fn gain(&self, dir: Vec3) -> f64 {
        let (ia, ie) = self.nearest_node(dir);
        self.gains[ia * self.elevation_grid_deg.len() + ie]
    }

    pub fn band_gain(&self, dir: Vec3) -> Option<[f64; NUM_BANDS]> {
        let (ia, ie) = self.nearest_node(dir);
        self.band_gains
            .as_ref()
            .map(|b| b[ia * self.elevation_grid_deg.len() + ie])
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.azimuth_grid_deg.iter().chain(&self.elevation_grid_deg).chain(&self.gains) {
            h.update(v.to_le_bytes());
        }
        if let Some(b) = &self.band_gains {
            for v in b.iter().flatten() {
                h.update(v.to_le_bytes());
            }
        }
        hex_digest(h)
    }
}

/// Multiply every reflection's directivity weight by the table gain at its
/// emission direction. Per-band tables also set per-band weights.
pub fn weight_source(mut list: ReflectionList, table: &DirectivityTable) -> Result<ReflectionList> {
    for r in &mut list.reflections {
        let dir = r.emission_dir.ok_or(Error::MissingEmissionDirections)?;
        let (ia, ie) = table.nearest_node(dir);
        let slot = ia * table.elevation_grid_deg.len() + ie;
        let g = table.gains[slot];
        match (&table.band_gains, &mut r.band_directivity) {
            (Some(bg), Some(existing)) => {
                for (e, b) in existing.iter_mut().zip(bg[slot]) {
                    *e *= b;
                }
            }
            (Some(bg), None) => {
                let base = r.directivity_gain;
                r.band_directivity = Some(Box::new(bg[slot].map(|b| base * b)));
            }
            (None, Some(existing)) => existing.iter_mut().for_each(|e| *e *= g),
            (None, None) => {}
        }
        r.directivity_gain *= g;
    }
    Ok(list)
}

/// Directional impulse responses for a single ear.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverFilterSet {
    pub directions: Vec<Vec3>,
    pub impulse_responses: Vec<Vec<f64>>,
    pub sample_rate_hz: u32,
    pub label: String,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    az_deg: f64,
    el_deg: f64,
    path: PathBuf,
}

/// `n` nearly uniform directions on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

impl ReceiverFilterSet {
    pub const MIN_DIRECTIONS: usize = 16;

    pub fn new(directions: Vec<Vec3>, impulse_responses: Vec<Vec<f64>>, sample_rate_hz: u32, label: &str) -> Result<Self> {
        if directions.len() < Self::MIN_DIRECTIONS {
            return Err(invalid(format!(
                "need at least {} directions, got {}",
                Self::MIN_DIRECTIONS,
                directions.len()
            )));
        }
        if directions.len() != impulse_responses.len() {
            return Err(invalid("one impulse response per direction required"));
        }
        let len = impulse_responses[0].len();
        if len == 0 || impulse_responses.iter().any(|h| h.len() != len) {
            return Err(invalid("impulse responses must be non-empty and equally long"));
        }
        if impulse_responses.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("impulse responses must be finite"));
        }
        if directions.iter().any(|d| !(d.norm() > 0.0)) {
            return Err(invalid("directions must be non-zero"));
        }
        // Every octant must be reachable for the set to span the sphere.
        let mut octants = [false; 8];
        for d in &directions {
            for (o, seen) in octants.iter_mut().enumerate() {
                let s = |bit: usize, v: f64| if o & bit != 0 { v <= 0.0 } else { v >= 0.0 };
                if s(1, d.x) && s(2, d.y) && s(4, d.z) {
                    *seen = true;
                }
            }
        }
        if !octants.iter().all(|s| *s) {
            return Err(invalid("directions do not span the sphere"));
        }
        Ok(ReceiverFilterSet {
            directions: directions.into_iter().map(Vec3::normalized).collect(),
            impulse_responses,
            sample_rate_hz,
            label: label.to_string(),
        })
    }

    /// Unit impulses in every direction: receiver rendering becomes plain
    /// omni synthesis.
    pub fn identity(sample_rate_hz: u32) -> ReceiverFilterSet {
        let dirs = fibonacci_sphere(Self::MIN_DIRECTIONS);
        let n = dirs.len();
        Self::new(dirs, vec![vec![1.0]; n], sample_rate_hz, "identity").expect("valid set")
    }

    /// Rigid-sphere head-shadow model for the left ear (ear axis +y in the
    /// receiver frame), minimum phase, 240 directions, 128 taps.
    pub fn synthetic_sphere(sample_rate_hz: u32) -> ReceiverFilterSet {
        let dirs = fibonacci_sphere(SPHERE_DIRECTIONS);
        let mut planner = FftPlanner::new();
        let irs = dirs
            .iter()
            .map(|d| {
                let theta = d.y.clamp(-1.0, 1.0).acos().to_degrees();
                sphere_filter(theta, sample_rate_hz, &mut planner)
            })
            .collect();
        Self::new(dirs, irs, sample_rate_hz, SPHERE_LABEL).expect("valid set")
    }

    /// Load from an index file, resampling every filter to `sample_rate_hz`.
    pub fn load(index_path: &Path, sample_rate_hz: u32) -> Result<ReceiverFilterSet> {
        let base = index_path.parent().unwrap_or(Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(index_path)
            .map_err(|e| invalid(format!("{}: {e}", index_path.display())))?;
        let mut dirs = Vec::new();
        let mut irs = Vec::new();
        for row in reader.deserialize() {
            let row: IndexRow = row.map_err(|e| invalid(format!("{}: {e}", index_path.display())))?;
            let a = audio::read_audio(&base.join(&row.path))?.resampled(sample_rate_hz);
            dirs.push(Vec3::from_angles_deg(row.az_deg, row.el_deg));
            irs.push(a.samples);
        }
        Self::new(dirs, irs, sample_rate_hz, &index_path.display().to_string())
    }

    pub fn filter_len(&self) -> usize {
        self.impulse_responses[0].len()
    }

    /// Index of the direction closest to `local_dir` (largest dot product,
    /// ties toward the lower index).
    pub fn nearest(&self, local_dir: Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let dot = d.dot(local_dir);
            if dot > best_dot {
                best = i;
                best_dot = dot;
            }
        }
        best
    }

    pub fn is_identity(&self) -> bool {
        self.impulse_responses.iter().all(|h| h.as_slice() == [1.0])
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sample_rate_hz.to_le_bytes());
        for d in &self.directions {
            for v in d.to_array() {
                h.update(v.to_le_bytes());
            }
        }
        for v in self.impulse_responses.iter().flatten() {
            h.update(v.to_le_bytes());
        }
        hex_digest(h)
    }
}

/// Power response of the head-shadow model at angle `theta_deg` from the ear
/// axis.
pub fn sphere_power_response(theta_deg: f64, freq_hz: f64) -> f64 {
    let alpha = (1.0 + SPHERE_ALPHA_MIN / 2.0)
        + (1.0 - SPHERE_ALPHA_MIN / 2.0) * (theta_deg / SPHERE_THETA_MIN_DEG * 180.0).to_radians().cos();
    let w0 = SPEED_OF_SOUND / HEAD_RADIUS_M;
    let x = 2.0 * std::f64::consts::PI * freq_hz / (2.0 * w0);
    (1.0 + (alpha * x).powi(2)) / (1.0 + x * x)
}

/// Minimum-phase FIR with the model's magnitude, via the folded real cepstrum.
fn sphere_filter(theta_deg: f64, sample_rate_hz: u32, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = SPHERE_FFT_LEN;
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let fs = f64::from(sample_rate_hz);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let bin = k.min(n - k) as f64;
            let p = sphere_power_response(theta_deg, bin * fs / n as f64);
            Complex64::new(0.5 * p.ln(), 0.0)
        })
        .collect();
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (i, c) in buf.iter_mut().enumerate() {
        let w = match i {
            0 => 1.0,
            i if i < n / 2 => 2.0,
            i if i == n / 2 => 1.0,
            _ => 0.0,
        };
        *c = Complex64::new(c.re * scale * w, 0.0);
    }
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = c.exp();
    }
    inv.process(&mut buf);
    buf[..SPHERE_TAPS].iter().map(|c| c.re * scale).collect()
}

/// Deposit each reflection as amplitude x the filter nearest its arrival
/// direction (seen from the oriented receiver). Output is `length_samples`
/// plus the filter length minus one.
pub fn apply_receiver(
    list: &ReflectionList,
    filters: &ReceiverFilterSet,
    orientation: Orientation,
    length_samples: usize,
    sample_rate_hz: u32,
    interp: Interp,
) -> Result<Rir> {
    check_length(list, length_samples, sample_rate_hz)?;
    if filters.sample_rate_hz != sample_rate_hz {
        return Err(invalid("receiver filters use a different sample rate"));
    }
    let mut bands = crate::render::deposit_bands_receiver(
        list,
        1,
        |r, _| r.effective_amplitude(),
        filters,
        orientation,
        length_samples,
        sample_rate_hz,
        interp,
    );
    Ok(Rir::new(sample_rate_hz, bands.remove(0)))
}
