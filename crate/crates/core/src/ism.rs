//! Image-source enumeration for shoebox rooms and time-domain tap synthesis.
//!
//! Along each axis an image is labelled by an integer `n` and a parity `p`:
//! its coordinate is `(1 - 2p) * s + 2 n L`, and the path it represents hits
//! the wall at 0 `|n - p|` times and the wall at `L` `|n|` times.
//!
//! Amplitudes follow the 1/d law normalized so that the direct path at 1 m
//! has unit gain, with distances floored at `min_distance_m`. Reflection
//! factors are `sqrt(1 - alpha)` and always positive.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::params::{SimParams, NUM_BANDS};
use crate::room::{RoomConfig, Variant};

pub const SINC_TAPS: usize = 81;
const SINC_HALF: isize = (SINC_TAPS as isize - 1) / 2;
/// Hann window half-width in samples; one sample beyond the outermost tap.
const WINDOW_HALF_WIDTH: f64 = SINC_HALF as f64 + 1.0;

pub const AMPLITUDE_CONVENTION: &str = "1/d, unit gain at 1 m, d_min floor, positive beta";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsmParams {
    pub speed_of_sound: f64,
    pub min_distance_m: f64,
    pub image_budget: u64,
}

impl Default for IsmParams {
    fn default() -> Self {
        IsmParams::from(&SimParams::default())
    }
}

impl From<&SimParams> for IsmParams {
    fn from(p: &SimParams) -> Self {
        Self {
            speed_of_sound: p.speed_of_sound,
            min_distance_m: p.min_distance_m,
            image_budget: p.image_budget,
        }
    }
}

/// Absorption coefficient of each wall, ordered `x=0, x=L, y=0, y=L, z=0, z=L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallAbsorption(pub [f64; 6]);

impl WallAbsorption {
    pub fn uniform(alpha: f64) -> Result<Self> {
        Self::new([alpha; 6])
    }

    /// Coefficients must lie in `(0, 1]`; 1 makes a wall fully absorptive.
    pub fn new(alpha: [f64; 6]) -> Result<Self> {
        if alpha.iter().all(|a| *a > 0.0 && *a <= 1.0) {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "absorption coefficients must lie in (0, 1], got {alpha:?}"
            )))
        }
    }

    pub fn reflection_factors(&self) -> [f64; 6] {
        self.0.map(|a| (1.0 - a).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageIndex {
    pub n: [i32; 3],
    pub parity: [u8; 3],
}

impl ImageIndex {
    pub const DIRECT: ImageIndex = ImageIndex {
        n: [0; 3],
        parity: [0; 3],
    };

    pub fn is_direct(&self) -> bool {
        *self == Self::DIRECT
    }

    /// Index of the same wall sequence traversed backwards, i.e. the matching
    /// image once source and receiver are exchanged. Even-parity axes flip
    /// the sign of `n` because reversal swaps which wall is hit first.
    pub fn reciprocal(&self) -> ImageIndex {
        let mut n = self.n;
        for a in 0..3 {
            if self.parity[a] == 0 {
                n[a] = -n[a];
            }
        }
        ImageIndex {
            n,
            parity: self.parity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub index: ImageIndex,
    pub image_pos_m: Vec3,
    pub distance_m: f64,
    pub delay_s: f64,
    /// Propagation amplitude; always reproducible with [`reflection_gain`].
    pub amplitude: f64,
    /// Product of directivity weights applied so far (1 when omni).
    pub directivity_gain: f64,
    /// Per-band directivity weights, set once a per-band table is applied.
    pub band_directivity: Option<Box<[f64; NUM_BANDS]>>,
    /// Direction the sound arrives from, in room axes centred on the receiver.
    pub arrival_dir: Vec3,
    /// Direction the sound leaves the source, in the source frame.
    pub emission_dir: Option<Vec3>,
    pub wall_hits: [u16; 6],
}

impl Reflection {
    pub fn effective_amplitude(&self) -> f64 {
        self.amplitude * self.directivity_gain
    }

    /// Directivity weight used when rendering band `band`.
    pub fn band_gain(&self, band: usize) -> f64 {
        match &self.band_directivity {
            Some(g) => g[band],
            None => self.directivity_gain,
        }
    }

    pub fn reflection_order(&self) -> u32 {
        self.wall_hits.iter().map(|&h| u32::from(h)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionList {
    pub reflections: Vec<Reflection>,
    pub max_order: [u32; 3],
    pub speed_of_sound: f64,
    /// Images farther than this were dropped (`None` keeps the whole box).
    pub max_distance_m: Option<f64>,
}

impl ReflectionList {
    pub fn len(&self) -> usize {
        self.reflections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reflections.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Reflection> {
        self.reflections.iter()
    }

    pub fn max_delay_s(&self) -> f64 {
        self.reflections.iter().map(|r| r.delay_s).fold(0.0, f64::max)
    }

    /// Recompute propagation amplitudes for another set of wall absorptions.
    /// Geometry, ordering and directivity weights are untouched.
    pub fn with_absorption(&self, absorption: &WallAbsorption, min_distance_m: f64) -> ReflectionList {
        let betas = absorption.reflection_factors();
        let mut out = self.clone();
        for r in &mut out.reflections {
            r.amplitude = reflection_gain(&betas, &r.wall_hits, r.distance_m, min_distance_m);
        }
        out
    }
}

fn axis_gain(beta_lo: f64, beta_hi: f64, hits_lo: u16, hits_hi: u16) -> f64 {
    beta_lo.powi(i32::from(hits_lo)) * beta_hi.powi(i32::from(hits_hi))
}

/// Amplitude of a reflection from its wall hits and path length. The
/// enumerator uses exactly this arithmetic, so recomputation is bit-exact.
pub fn reflection_gain(betas: &[f64; 6], hits: &[u16; 6], distance_m: f64, min_distance_m: f64) -> f64 {
    let gx = axis_gain(betas[0], betas[1], hits[0], hits[1]);
    let gy = axis_gain(betas[2], betas[3], hits[2], hits[3]);
    let gz = axis_gain(betas[4], betas[5], hits[4], hits[5]);
    gx * gy * gz / distance_m.max(min_distance_m)
}

/// Per-axis image order that spans the `t60_s` decay path:
/// `ceil(c * t60 / (2 r)) + 1`.
pub fn max_order_for(config: &RoomConfig, t60_s: f64, speed_of_sound: f64) -> [u32; 3] {
    let path = speed_of_sound * t60_s.max(0.0);
    [0, 1, 2].map(|a| (path / (2.0 * config.dims_m.component(a))).ceil() as u32 + 1)
}

pub fn image_count(max_order: [u32; 3]) -> u64 {
    max_order
        .iter()
        .map(|&n| 2 * (2 * u64::from(n) + 1))
        .product()
}

/// Every image with `|n_i| <= max_order[i]`, sorted by delay then index.
pub fn enumerate_images(
    config: &RoomConfig,
    absorption: &WallAbsorption,
    max_order: [u32; 3],
    ism: &IsmParams,
) -> Result<ReflectionList> {
    enumerate_between(config.dims_m, config.src_pos_m, config.rec_pos_m, absorption, max_order, ism, None)
}

/// Like [`enumerate_images`] but drops images farther than `max_distance_m`,
/// which can never land inside a render window of that length.
pub fn enumerate_images_within(
    config: &RoomConfig,
    absorption: &WallAbsorption,
    max_order: [u32; 3],
    ism: &IsmParams,
    max_distance_m: f64,
) -> Result<ReflectionList> {
    enumerate_between(
        config.dims_m,
        config.src_pos_m,
        config.rec_pos_m,
        absorption,
        max_order,
        ism,
        Some(max_distance_m),
    )
}

struct AxisImage {
    n: i32,
    parity: u8,
    coord: f64,
    hits_lo: u16,
    hits_hi: u16,
    gain: f64,
}

fn axis_images(src: f64, len: f64, order: u32, beta_lo: f64, beta_hi: f64) -> Vec<AxisImage> {
    let order = order as i32;
    let mut out = Vec::with_capacity(2 * (2 * order as usize + 1));
    for n in -order..=order {
        for parity in 0..2u8 {
            let sign = if parity == 0 { 1.0 } else { -1.0 };
            let hits_lo = (n - i32::from(parity)).unsigned_abs() as u16;
            let hits_hi = n.unsigned_abs() as u16;
            out.push(AxisImage {
                n,
                parity,
                coord: sign * src + 2.0 * f64::from(n) * len,
                hits_lo,
                hits_hi,
                gain: axis_gain(beta_lo, beta_hi, hits_lo, hits_hi),
            });
        }
    }
    out
}

fn enumerate_between(
    dims: Vec3,
    src: Vec3,
    rec: Vec3,
    absorption: &WallAbsorption,
    max_order: [u32; 3],
    ism: &IsmParams,
    max_distance_m: Option<f64>,
) -> Result<ReflectionList> {
    let count = image_count(max_order);
    if count > ism.image_budget {
        return Err(Error::BudgetExceeded {
            count,
            budget: ism.image_budget,
        });
    }
    let betas = absorption.reflection_factors();
    let xs = axis_images(src.x, dims.x, max_order[0], betas[0], betas[1]);
    let ys = axis_images(src.y, dims.y, max_order[1], betas[2], betas[3]);
    let zs = axis_images(src.z, dims.z, max_order[2], betas[4], betas[5]);
    let limit_sq = max_distance_m.map_or(f64::INFINITY, |d| d * d);

    let mut reflections = Vec::new();
    for ix in &xs {
        let dx = ix.coord - rec.x;
        let dx2 = dx * dx;
        if dx2 > limit_sq {
            continue;
        }
        for iy in &ys {
            let dy = iy.coord - rec.y;
            let dxy2 = dx2 + dy * dy;
            if dxy2 > limit_sq {
                continue;
            }
            for iz in &zs {
                let dz = iz.coord - rec.z;
                let d2 = dxy2 + dz * dz;
                if d2 > limit_sq {
                    continue;
                }
                let distance = d2.sqrt();
                let diff = Vec3::new(dx, dy, dz);
                reflections.push(Reflection {
                    index: ImageIndex {
                        n: [ix.n, iy.n, iz.n],
                        parity: [ix.parity, iy.parity, iz.parity],
                    },
                    image_pos_m: Vec3::new(ix.coord, iy.coord, iz.coord),
                    distance_m: distance,
                    delay_s: distance / ism.speed_of_sound,
                    amplitude: ix.gain * iy.gain * iz.gain / distance.max(ism.min_distance_m),
                    directivity_gain: 1.0,
                    band_directivity: None,
                    arrival_dir: diff.normalized(),
                    emission_dir: None,
                    wall_hits: [ix.hits_lo, ix.hits_hi, iy.hits_lo, iy.hits_hi, iz.hits_lo, iz.hits_hi],
                });
            }
        }
    }
    reflections.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s).then(a.index.cmp(&b.index)));
    Ok(ReflectionList {
        reflections,
        max_order,
        speed_of_sound: ism.speed_of_sound,
        max_distance_m,
    })
}

/// Fill in emission directions by enumerating the reciprocal problem (source
/// and receiver exchanged): the arrival direction of each reciprocal image at
/// the source is the emission direction of the original reflection.
pub fn emission_directions(config: &RoomConfig, mut list: ReflectionList, ism: &IsmParams) -> Result<ReflectionList> {
    // Geometry is all that matters for directions; absorption is arbitrary.
    let any = WallAbsorption::uniform(0.5)?;
    // Reciprocal paths have the same length up to rounding.
    let limit = list.max_distance_m.map(|d| d + 1e-6);
    let swapped = enumerate_between(
        config.dims_m,
        config.rec_pos_m,
        config.src_pos_m,
        &any,
        list.max_order,
        ism,
        limit,
    )?;
    let arrivals: HashMap<ImageIndex, Vec3> = swapped
        .reflections
        .into_iter()
        .map(|r| (r.index, r.arrival_dir))
        .collect();
    let frame = config.source_orientation();
    for r in &mut list.reflections {
        let world = arrivals.get(&r.index.reciprocal()).ok_or_else(|| {
            Error::InvalidParameter(format!("no reciprocal image for {:?}", r.index))
        })?;
        r.emission_dir = Some(frame.to_local(*world));
    }
    Ok(list)
}

/// Fractional-delay interpolation used when placing taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Nearest,
    #[default]
    Sinc,
}

/// One tap's contribution, shared by every band that deposits the same delay.
#[derive(Debug, Clone)]
pub(crate) enum Kernel {
    Nearest(usize),
    Sinc { start: isize, taps: [f64; SINC_TAPS] },
}

fn window_tables() -> &'static ([f64; SINC_TAPS], [f64; SINC_TAPS]) {
    static TABLES: OnceLock<([f64; SINC_TAPS], [f64; SINC_TAPS])> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut c = [0.0; SINC_TAPS];
        let mut s = [0.0; SINC_TAPS];
        for (i, m) in (-SINC_HALF..=SINC_HALF).enumerate() {
            let phase = std::f64::consts::PI * m as f64 / WINDOW_HALF_WIDTH;
            c[i] = phase.cos();
            s[i] = phase.sin();
        }
        (c, s)
    })
}

impl Kernel {
    pub(crate) fn new(delay_samples: f64, interp: Interp) -> Kernel {
        let center = delay_samples.round();
        match interp {
            Interp::Nearest => Kernel::Nearest(center as usize),
            Interp::Sinc => Kernel::Sinc {
                start: center as isize - SINC_HALF,
                taps: sinc_taps(delay_samples - center),
            },
        }
    }

    pub(crate) fn add_to(&self, buf: &mut [f64], amp: f64) {
        match self {
            Kernel::Nearest(i) => {
                if let Some(v) = buf.get_mut(*i) {
                    *v += amp;
                }
            }
            Kernel::Sinc { start, taps } => {
                let lo = (-start).max(0) as usize;
                let hi = (buf.len() as isize - start).clamp(0, SINC_TAPS as isize) as usize;
                if lo >= hi {
                    return;
                }
                let base = (start + lo as isize) as usize;
                for (v, k) in buf[base..base + (hi - lo)].iter_mut().zip(&taps[lo..hi]) {
                    *v += amp * k;
                }
            }
        }
    }
}

/// Hann-windowed sinc taps for a fractional offset `frac` in `[-0.5, 0.5]`,
/// normalized to unit energy. Tap `i` sits at integer offset `i - 40`.
fn sinc_taps(frac: f64) -> [f64; SINC_TAPS] {
    let mut taps = [0.0; SINC_TAPS];
    if frac == 0.0 {
        taps[SINC_HALF as usize] = 1.0;
        return taps;
    }
    let pi = std::f64::consts::PI;
    // sin(pi (m - f)) = -(-1)^m sin(pi f) for integer m.
    let s = (pi * frac).sin();
    let (cos_f, sin_f) = {
        let phase = pi * frac / WINDOW_HALF_WIDTH;
        (phase.cos(), phase.sin())
    };
    let (cos_m, sin_m) = window_tables();
    let mut energy = 0.0;
    for (i, m) in (-SINC_HALF..=SINC_HALF).enumerate() {
        let t = m as f64 - frac;
        let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
        let sinc = sign * s / (pi * t);
        // cos(pi (m - f) / W) by angle subtraction.
        let window = 0.5 * (1.0 + cos_m[i] * cos_f + sin_m[i] * sin_f);
        taps[i] = sinc * window;
        energy += taps[i] * taps[i];
    }
    let norm = 1.0 / energy.sqrt();
    for t in &mut taps {
        *t *= norm;
    }
    taps
}

/// A rendered impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
    pub variant: Option<Variant>,
    pub config_id: String,
    pub peak_index: usize,
}

impl Rir {
    pub fn new(sample_rate_hz: u32, samples: Vec<f64>) -> Rir {
        let peak_index = peak_index(&samples);
        Rir {
            sample_rate_hz,
            samples,
            variant: None,
            config_id: String::new(),
            peak_index,
        }
    }

    pub fn with_meta(mut self, variant: Variant, config_id: &str) -> Rir {
        self.variant = Some(variant);
        self.config_id = config_id.to_string();
        self
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

pub fn peak_index(samples: &[f64]) -> usize {
    let mut best = 0;
    let mut max = -1.0;
    for (i, x) in samples.iter().enumerate() {
        if x.abs() > max {
            max = x.abs();
            best = i;
        }
    }
    best
}

pub(crate) fn check_length(list: &ReflectionList, length_samples: usize, sample_rate_hz: u32) -> Result<()> {
    let max_delay = list.max_delay_s() * f64::from(sample_rate_hz);
    if length_samples == 0 || max_delay > (length_samples - 1) as f64 {
        return Err(Error::LengthTooShort {
            length: length_samples,
            needed: max_delay.ceil() as usize + 1,
        });
    }
    Ok(())
}

/// Sum every reflection's tap into a buffer of `length_samples`.
pub fn synthesize(list: &ReflectionList, length_samples: usize, sample_rate_hz: u32, interp: Interp) -> Result<Rir> {
    check_length(list, length_samples, sample_rate_hz)?;
    let fs = f64::from(sample_rate_hz);
    let mut buf = vec![0.0; length_samples];
    for r in &list.reflections {
        Kernel::new(r.delay_s * fs, interp).add_to(&mut buf, r.effective_amplitude());
    }
    Ok(Rir::new(sample_rate_hz, buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(src: Vec3, rec: Vec3, dims: Vec3) -> RoomConfig {
        RoomConfig {
            id: "t".into(),
            seed: 0,
            dims_m: dims,
            rec_pos_m: rec,
            rec_yaw_deg: 0.0,
            rec_pitch_deg: 0.0,
            src_pos_m: src,
            t60_bands_s: vec![0.5; 6],
            t60_scalar_s: 0.5,
            variant: Variant::Sb,
            t60_clamped: false,
        }
    }

    fn hand_room() -> RoomConfig {
        config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(3.7, 2.0, 1.5), Vec3::new(6.0, 5.0, 3.0))
    }

    #[test]
    fn order_zero_is_direct_path_only() {
        let list = enumerate_images(&hand_room(), &WallAbsorption::uniform(0.3).unwrap(), [0; 3], &IsmParams::default())
            .unwrap();
        // parity images with n = 0 are first-order reflections
        assert_eq!(list.len(), 8);
        let direct: Vec<_> = list.iter().filter(|r| r.index.is_direct()).collect();
        assert_eq!(direct.len(), 1);
        assert_eq!(direct[0].wall_hits, [0; 6]);
        assert!(list.reflections[0].index.is_direct());
    }

    #[test]
    fn direct_delay_hand_geometry() {
        let list = enumerate_images(&hand_room(), &WallAbsorption::uniform(0.3).unwrap(), [1; 3], &IsmParams::default())
            .unwrap();
        let d = &list.reflections[0];
        assert!(d.index.is_direct());
        assert!((d.delay_s - 1.7 / 343.0).abs() < 1e-15);
        assert!((d.delay_s * 48_000.0 - 237.900_874).abs() < 1e-5);
        assert!((d.amplitude - 1.0 / 1.7).abs() < 1e-15);
        assert_eq!(d.delay_s, d.distance_m / 343.0);
    }

    #[test]
    fn inverse_distance_law() {
        let ism = IsmParams::default();
        let abs = WallAbsorption::uniform(0.3).unwrap();
        let near = enumerate_images(
            &config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(3.0, 2.0, 1.5), Vec3::new(6.0, 5.0, 3.0)),
            &abs,
            [0; 3],
            &ism,
        )
        .unwrap();
        let far = enumerate_images(
            &config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(4.0, 2.0, 1.5), Vec3::new(6.0, 5.0, 3.0)),
            &abs,
            [0; 3],
            &ism,
        )
        .unwrap();
        assert_eq!(near.reflections[0].amplitude, 2.0 * far.reflections[0].amplitude);
    }

    #[test]
    fn sorted_and_recomputable() {
        let abs = WallAbsorption::new([0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        let list = enumerate_images(&hand_room(), &abs, [3, 3, 4], &IsmParams::default()).unwrap();
        assert_eq!(list.len() as u64, image_count([3, 3, 4]));
        let betas = abs.reflection_factors();
        for w in list.reflections.windows(2) {
            assert!(
                w[0].delay_s < w[1].delay_s || (w[0].delay_s == w[1].delay_s && w[0].index < w[1].index)
            );
        }
        for r in list.iter() {
            assert_eq!(r.amplitude, reflection_gain(&betas, &r.wall_hits, r.distance_m, 0.1));
            assert!((r.arrival_dir.norm() - 1.0).abs() < 1e-9);
            let order = r.reflection_order() as i32;
            let expected: i32 = (0..3)
                .map(|a| (2 * r.index.n[a] - i32::from(r.index.parity[a])).abs())
                .sum();
            assert_eq!(order, expected);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let ism = IsmParams {
            image_budget: 1000,
            ..IsmParams::default()
        };
        let err = enumerate_images(&hand_room(), &WallAbsorption::uniform(0.3).unwrap(), [5; 3], &ism).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { count: 10648, budget: 1000 }));
    }

    #[test]
    fn max_order_hand_values() {
        let c = config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(3.0, 2.0, 1.5), Vec3::new(10.0, 10.0, 3.0));
        assert_eq!(max_order_for(&c, 0.5, 343.0), [10, 10, 30]);
        assert_eq!(max_order_for(&c, 0.0, 343.0), [1, 1, 1]);
        assert_eq!(max_order_for(&c, 1e-9, 343.0), [2, 2, 2]);
        let wide = config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(3.0, 2.0, 1.5), Vec3::new(20.0, 10.0, 6.0));
        let (a, b) = (max_order_for(&c, 2.0, 343.0), max_order_for(&wide, 2.0, 343.0));
        for (n, m) in [(a[0], b[0]), (a[2], b[2])] {
            // n - 1 = ceil(k), m - 1 = ceil(k / 2)
            assert!((m - 1) * 2 >= n - 1 && (m - 1) * 2 <= n);
        }
    }

    #[test]
    fn reciprocal_index_is_an_involution() {
        let i = ImageIndex {
            n: [2, -3, 1],
            parity: [0, 1, 0],
        };
        assert_eq!(i.reciprocal(), ImageIndex { n: [-2, -3, -1], parity: [0, 1, 0] });
        assert_eq!(i.reciprocal().reciprocal(), i);
        assert_eq!(ImageIndex::DIRECT.reciprocal(), ImageIndex::DIRECT);
    }

    #[test]
    fn direct_emission_points_at_receiver() {
        let c = config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(4.0, 2.0, 1.5), Vec3::new(6.0, 5.0, 3.0));
        let ism = IsmParams::default();
        let list = enumerate_images(&c, &WallAbsorption::uniform(0.3).unwrap(), [2; 3], &ism).unwrap();
        let list = emission_directions(&c, list, &ism).unwrap();
        let e = list.reflections[0].emission_dir.unwrap();
        assert!((e - Vec3::X).norm() < 1e-12);
        // source frame coincides with room axes here
        assert_eq!(c.source_orientation().yaw_deg, 0.0);
    }

    /// Unfolding oracle in the horizontal plane: for the first-order image in
    /// the far x wall, the ray leaves the source mirrored about the wall normal
    /// relative to how it arrives at the receiver.
    #[test]
    fn first_order_x_wall_mirror() {
        let dims = Vec3::new(6.0, 5.0, 3.0);
        let c = config(Vec3::new(2.0, 1.5, 1.5), Vec3::new(2.0, 3.5, 1.5), dims);
        let ism = IsmParams::default();
        let list = enumerate_images(&c, &WallAbsorption::uniform(0.3).unwrap(), [1; 3], &ism).unwrap();
        let list = emission_directions(&c, list, &ism).unwrap();
        let r = list
            .iter()
            .find(|r| r.index == ImageIndex { n: [1, 0, 0], parity: [1, 0, 0] })
            .unwrap();
        // reflection point on x = 6 wall: halfway in y between src and rec
        let hit = Vec3::new(6.0, 2.5, 1.5);
        let expect_arrival = (hit - c.rec_pos_m).normalized();
        let expect_emission_world = (hit - c.src_pos_m).normalized();
        assert!((r.arrival_dir - expect_arrival).norm() < 1e-12);
        let world = c.source_orientation().to_world(r.emission_dir.unwrap());
        assert!((world - expect_emission_world).norm() < 1e-12);
        // mirrored about the wall normal (x axis): same x, opposite y
        assert!((world.x - r.arrival_dir.x).abs() < 1e-12);
        assert!((world.y + r.arrival_dir.y).abs() < 1e-12);
    }

    #[test]
    fn nearest_one_hot() {
        let c = config(Vec3::new(2.0, 2.0, 1.5), Vec3::new(2.0 + 343.0 / 48_000.0 * 300.0, 2.0, 1.5), Vec3::new(10.0, 5.0, 3.0));
        let list = enumerate_images(&c, &WallAbsorption::uniform(0.3).unwrap(), [0; 3], &IsmParams::default()).unwrap();
        let direct = ReflectionList {
            reflections: vec![list.reflections[0].clone()],
            ..list
        };
        let rir = synthesize(&direct, 1000, 48_000, Interp::Nearest).unwrap();
        let nz: Vec<_> = rir.samples.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].0, 300);
        assert_eq!(*nz[0].1, direct.reflections[0].amplitude);
    }

    #[test]
    fn sinc_fractional_delay_energy_and_peak() {
        let list = enumerate_images(&hand_room(), &WallAbsorption::uniform(0.3).unwrap(), [0; 3], &IsmParams::default())
            .unwrap();
        let amp = list.reflections[0].amplitude;
        let direct = ReflectionList {
            reflections: vec![list.reflections[0].clone()],
            ..list
        };
        let rir = synthesize(&direct, 600, 48_000, Interp::Sinc).unwrap();
        assert!(rir.peak_index == 237 || rir.peak_index == 238);
        assert!((rir.energy() - amp * amp).abs() < 1e-6);
        assert!(synthesize(&direct, 200, 48_000, Interp::Sinc).is_err());
    }

    #[test]
    fn sinc_kernel_matches_direct_formula() {
        for frac in [-0.5, -0.31, 0.1, 0.25, 0.49] {
            let taps = sinc_taps(frac);
            let mut raw = [0.0; SINC_TAPS];
            for (i, m) in (-SINC_HALF..=SINC_HALF).enumerate() {
                let t = m as f64 - frac;
                let pt = std::f64::consts::PI * t;
                let w = 0.5 * (1.0 + (pt / WINDOW_HALF_WIDTH).cos());
                raw[i] = pt.sin() / pt * w;
            }
            let e: f64 = raw.iter().map(|x| x * x).sum();
            for (a, b) in taps.iter().zip(raw.iter()) {
                assert!((a - b / e.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn free_field_has_only_the_direct_kernel() {
        let c = hand_room();
        let list = enumerate_images(&c, &WallAbsorption::uniform(1.0).unwrap(), [3; 3], &IsmParams::default()).unwrap();
        let rir = synthesize(&list, 9000, 48_000, Interp::Sinc).unwrap();
        let total = rir.energy();
        let outside: f64 = rir
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as isize - 238).abs() > SINC_HALF)
            .map(|(_, v)| v * v)
            .sum();
        assert!(outside < 1e-10 * total);
    }
}
