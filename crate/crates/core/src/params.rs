//! Simulation knobs and the TOML config file that overrides them.
//!
//! Every field has a default, so a config file only needs the keys it wants
//! to change:
//!
//! ```toml
//! speed_of_sound = 343.0
//! sabine_constant = 0.161
//! t60_bounds_s = [0.01, 3.0]
//!
//! [bands]
//! centers_hz = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0]
//! sample_rate_hz = 48000
//!
//! [gamma]
//! shape = [1.72, 1.62, 1.93, 2.56, 4.17, 2.49]
//! scale = [0.39, 0.24, 0.14, 0.10, 0.09, 0.18]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_BANDS: usize = 6;
pub const DEFAULT_SAMPLE_RATE: u32 = 48_000;
pub const SPEED_OF_SOUND: f64 = 343.0;
pub const SABINE_CONSTANT: f64 = 0.161;

/// Octave band layout shared by the sampler, renderer and validator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandSpec {
    pub centers_hz: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            centers_hz: vec![125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0],
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl BandSpec {
    pub fn with_sample_rate(sample_rate_hz: u32) -> Self {
        Self {
            sample_rate_hz,
            ..Self::default()
        }
    }

    pub fn num_bands(&self) -> usize {
        self.centers_hz.len()
    }

    /// Geometric midpoints between adjacent centers.
    pub fn crossovers_hz(&self) -> Vec<f64> {
        self.centers_hz
            .windows(2)
            .map(|w| (w[0] * w[1]).sqrt())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers_hz.len() != NUM_BANDS {
            return Err(Error::InvalidParameter(format!(
                "expected {NUM_BANDS} band centers, got {}",
                self.centers_hz.len()
            )));
        }
        if self.centers_hz.iter().any(|f| !(f.is_finite() && *f > 0.0))
            || self.centers_hz.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidParameter(
                "band centers must be positive and strictly increasing".into(),
            ));
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        match self.crossovers_hz().last() {
            Some(&top) if top < nyquist => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "highest crossover must lie below Nyquist ({nyquist} Hz)"
            ))),
        }
    }

    /// Index of the band whose center is `center_hz`, if any.
    pub fn band_index(&self, center_hz: f64) -> Option<usize> {
        self.centers_hz
            .iter()
            .position(|&c| (c - center_hz).abs() < 1e-6)
    }
}

/// Per-band Gamma distributions for reverberation times (shape/scale form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaParams {
    pub shape: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Default for GammaParams {
    fn default() -> Self {
        Self {
            shape: vec![1.72, 1.62, 1.93, 2.56, 4.17, 2.49],
            scale: vec![0.39, 0.24, 0.14, 0.10, 0.09, 0.18],
        }
    }
}

impl GammaParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.shape.len() == NUM_BANDS
            && self.scale.len() == NUM_BANDS
            && self
                .shape
                .iter()
                .chain(&self.scale)
                .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "gamma parameters need {NUM_BANDS} strictly positive shapes and scales"
            )))
        }
    }

    /// Long-run mean `shape * scale` of each band.
    pub fn means(&self) -> Vec<f64> {
        self.shape.iter().zip(&self.scale).map(|(a, b)| a * b).collect()
    }
}

/// All knobs of the generator. Rendering-relevant fields feed the manifest
/// digest; sampling-only fields are reflected in the sampled configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub bands: BandSpec,
    pub gamma: GammaParams,
    pub t60_bounds_s: (f64, f64),
    pub speed_of_sound: f64,
    pub sabine_constant: f64,
    /// Distance floor (m) for the 1/d spreading law.
    pub min_distance_m: f64,
    /// Upper bound on the number of images per enumeration.
    pub image_budget: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            bands: BandSpec::default(),
            gamma: GammaParams::default(),
            t60_bounds_s: (0.01, 3.0),
            speed_of_sound: SPEED_OF_SOUND,
            sabine_constant: SABINE_CONSTANT,
            min_distance_m: 0.1,
            image_budget: 10_000_000,
        }
    }
}

impl SimParams {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: SimParams = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.bands.validate()?;
        self.gamma.validate()?;
        let (lo, hi) = self.t60_bounds_s;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "t60 bounds ({lo}, {hi}) must satisfy 0 < lo < hi"
            )));
        }
        for (name, v) in [
            ("speed_of_sound", self.speed_of_sound),
            ("sabine_constant", self.sabine_constant),
            ("min_distance_m", self.min_distance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.image_budget == 0 {
            return Err(Error::InvalidParameter("image_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.bands.sample_rate_hz
    }
}
