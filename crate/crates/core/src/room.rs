//! Random shoebox scenes and Sabine absorption.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Orientation, Vec3};
use crate::params::{GammaParams, SimParams, NUM_BANDS, SABINE_CONSTANT};
use crate::seed;

pub const MAX_T60_RESAMPLES: usize = 100;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
pub const MAX_ABSORPTION: f64 = 0.99;

/// Tag describing how the placement angle distributions are realized:
/// source direction drawn around the receiver, boresight aimed at it, then
/// jittered. Written into every manifest digest.
pub const PLACEMENT_INTERPRETATION: &str = "src-dir-az45-el10/boresight-to-src/jitter-yaw45-pitch10";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Sb,
    Mb,
    RecMb,
    SrcRecMb,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sb, Variant::Mb, Variant::RecMb, Variant::SrcRecMb];

    pub fn is_multiband(self) -> bool {
        self != Variant::Sb
    }

    pub fn has_receiver_directivity(self) -> bool {
        matches!(self, Variant::RecMb | Variant::SrcRecMb)
    }

    pub fn has_source_directivity(self) -> bool {
        self == Variant::SrcRecMb
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Variant::Sb => "sb",
            Variant::Mb => "mb",
            Variant::RecMb => "rec-mb",
            Variant::SrcRecMb => "src-rec-mb",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sb" => Ok(Variant::Sb),
            "mb" => Ok(Variant::Mb),
            "rec-mb" => Ok(Variant::RecMb),
            "src-rec-mb" => Ok(Variant::SrcRecMb),
            other => Err(Error::InvalidParameter(format!("unknown variant {other:?}"))),
        }
    }
}

/// One sampled acoustic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub id: String,
    pub seed: u64,
    pub dims_m: Vec3,
    pub rec_pos_m: Vec3,
    pub rec_yaw_deg: f64,
    pub rec_pitch_deg: f64,
    pub src_pos_m: Vec3,
    pub t60_bands_s: Vec<f64>,
    pub t60_scalar_s: f64,
    pub variant: Variant,
    /// Set when a band draw stayed outside the T60 bounds after all resamples.
    #[serde(default)]
    pub t60_clamped: bool,
}

impl RoomConfig {
    pub fn receiver_orientation(&self) -> Orientation {
        Orientation::new(self.rec_yaw_deg, self.rec_pitch_deg)
    }

    /// The talker faces the receiver in the horizontal plane.
    pub fn source_orientation(&self) -> Orientation {
        let d = self.rec_pos_m - self.src_pos_m;
        Orientation::new(d.y.atan2(d.x).to_degrees(), 0.0)
    }

    pub fn source_distance_m(&self) -> f64 {
        (self.rec_pos_m - self.src_pos_m).norm()
    }

    pub fn volume_m3(&self) -> f64 {
        self.dims_m.x * self.dims_m.y * self.dims_m.z
    }

    pub fn max_t60_s(&self) -> f64 {
        self.t60_bands_s.iter().copied().fold(self.t60_scalar_s, f64::max)
    }

    pub fn with_variant(&self, variant: Variant) -> RoomConfig {
        RoomConfig {
            variant,
            ..self.clone()
        }
    }

    /// Copy with source and receiver positions exchanged.
    pub fn swapped(&self) -> RoomConfig {
        RoomConfig {
            rec_pos_m: self.src_pos_m,
            src_pos_m: self.rec_pos_m,
            ..self.clone()
        }
    }

    /// Checks the sampler's geometric and T60 invariants.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims_m;
        let mut problems = Vec::new();
        if !(3.0..=30.0).contains(&d.x) {
            problems.push(format!("r_x {} outside [3, 30]", d.x));
        }
        if !(0.5 * d.x <= d.y && d.y <= d.x) {
            problems.push(format!("r_y {} outside [0.5 r_x, r_x]", d.y));
        }
        if !(2.5..=5.0).contains(&d.z) {
            problems.push(format!("r_z {} outside [2.5, 5]", d.z));
        }
        let r = self.rec_pos_m;
        if !(0.35 * d.x <= r.x && r.x <= 0.65 * d.x && 0.35 * d.y <= r.y && r.y <= 0.65 * d.y) {
            problems.push("receiver outside inner box".into());
        }
        if !(1.0..=2.0).contains(&r.z) {
            problems.push(format!("receiver height {} outside [1, 2]", r.z));
        }
        let dist = self.source_distance_m();
        if !(0.5..=3.0).contains(&dist) {
            problems.push(format!("source distance {dist} outside [0.5, 3]"));
        }
        if !strictly_inside(self.src_pos_m, d) || !strictly_inside(r, d) {
            problems.push("endpoint not strictly inside the room".into());
        }
        if self.t60_bands_s.len() != NUM_BANDS || self.t60_bands_s.iter().any(|t| !(*t > 0.0)) {
            problems.push("band T60s must be six positive values".into());
        }
        let mean = self.t60_bands_s.iter().sum::<f64>() / self.t60_bands_s.len() as f64;
        if (mean - self.t60_scalar_s).abs() > 1e-12 {
            problems.push("scalar T60 is not the band mean".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }
}

fn strictly_inside(p: Vec3, dims: Vec3) -> bool {
    (0..3).all(|a| p.component(a) > 0.0 && p.component(a) < dims.component(a))
}

/// Result of [`sample_t60_bands`].
#[derive(Debug, Clone, PartialEq)]
pub struct T60Draw {
    pub bands_s: Vec<f64>,
    /// True when some band exhausted its resamples and was clamped hard.
    pub clamped: bool,
}

/// Independent per-band Gamma draws, resampled into `bounds_s`.
pub fn sample_t60_bands(params: &GammaParams, bounds_s: (f64, f64), rng_seed: u64) -> T60Draw {
    let mut rng = seed::rng(rng_seed);
    let (lo, hi) = bounds_s;
    let mut clamped = false;
    let bands_s = params
        .shape
        .iter()
        .zip(&params.scale)
        .map(|(&shape, &scale)| {
            let dist = Gamma::new(shape, scale).expect("gamma parameters validated upstream");
            let mut t = dist.sample(&mut rng);
            let mut attempts = 0;
            while !(lo..=hi).contains(&t) && attempts < MAX_T60_RESAMPLES {
                t = dist.sample(&mut rng);
                attempts += 1;
            }
            if !(lo..=hi).contains(&t) {
                clamped = true;
                t = t.clamp(lo, hi);
            }
            t
        })
        .collect();
    T60Draw { bands_s, clamped }
}

/// Draw a complete scene. Deterministic in `(rng_seed, variant, params)`.
pub fn sample_room(rng_seed: u64, variant: Variant, params: &SimParams) -> Result<RoomConfig> {
    let mut rng = seed::rng(seed::stream(rng_seed, b"geometry"));
    let rx = rng.random_range(3.0..30.0);
    let ry = rx * rng.random_range(0.5..1.0);
    let rz = rng.random_range(2.5..5.0);
    let dims = Vec3::new(rx, ry, rz);
    let rec = Vec3::new(
        rx * rng.random_range(0.35..0.65),
        ry * rng.random_range(0.35..0.65),
        rng.random_range(1.0..2.0),
    );

    let draw = sample_t60_bands(&params.gamma, params.t60_bounds_s, seed::stream(rng_seed, b"t60"));
    let t60_scalar_s = draw.bands_s.iter().sum::<f64>() / draw.bands_s.len() as f64;

    let mut placement = None;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let dist = rng.random_range(0.5..3.0);
        let az = rng.random_range(-45.0..45.0);
        let el = rng.random_range(-10.0..10.0);
        let src = rec + Vec3::from_angles_deg(az, el) * dist;
        if strictly_inside(src, dims) {
            placement = Some((src, az, el));
            break;
        }
    }
    let (src, az, el) = placement.ok_or(Error::PlacementFailure {
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })?;
    let yaw_jitter = rng.random_range(-45.0..45.0);
    let pitch_jitter = rng.random_range(-10.0..10.0);

    Ok(RoomConfig {
        id: format!("{rng_seed:016x}"),
        seed: rng_seed,
        dims_m: dims,
        rec_pos_m: rec,
        rec_yaw_deg: az + yaw_jitter,
        rec_pitch_deg: el + pitch_jitter,
        src_pos_m: src,
        t60_bands_s: draw.bands_s,
        t60_scalar_s,
        variant,
        t60_clamped: draw.clamped,
    })
}

/// Uniform wall absorption from Sabine's formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorption {
    pub coefficient: f64,
    /// The formula exceeded [`MAX_ABSORPTION`] and was clamped.
    pub clamped: bool,
}

pub fn sabine_absorption(dims_m: Vec3, t60_s: f64) -> Absorption {
    sabine_absorption_with(dims_m, t60_s, SABINE_CONSTANT)
}

/// Decay time the room actually has under Sabine absorption: `t60_s`
/// itself, or the longer time implied by the clamped coefficient.
pub fn physical_t60_s(dims_m: Vec3, t60_s: f64, sabine_constant: f64) -> f64 {
    let a = sabine_absorption_with(dims_m, t60_s, sabine_constant);
    if !a.clamped {
        return t60_s;
    }
    let Vec3 { x, y, z } = dims_m;
    sabine_constant * x * y * z / (2.0 * (x * y + x * z + y * z) * a.coefficient)
}

pub fn sabine_absorption_with(dims_m: Vec3, t60_s: f64, sabine_constant: f64) -> Absorption {
    debug_assert!(t60_s > 0.0 && dims_m.x > 0.0 && dims_m.y > 0.0 && dims_m.z > 0.0);
    let Vec3 { x, y, z } = dims_m;
    let volume = x * y * z;
    let surface = 2.0 * (x * y + x * z + y * z);
    let alpha = sabine_constant * volume / (surface * t60_s);
    if alpha > MAX_ABSORPTION {
        Absorption {
            coefficient: MAX_ABSORPTION,
            clamped: true,
        }
    } else {
        Absorption {
            coefficient: alpha,
            clamped: false,
        }
    }
}
