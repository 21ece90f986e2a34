//! Octave-band split: 4th-order Butterworth edges built from two biquads,
//! run forward and backward so every branch is zero-phase.
//!
//! Band 1 is a lowpass below the first crossover, the last band a highpass
//! above the final crossover, and the ones in between bandpass (highpass at
//! the lower edge cascaded with lowpass at the upper edge).

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::BandSpec;

pub const FILTER_DESIGN: &str = "butterworth4-bilinear-prewarped/forward-backward/crossovers-geometric";

/// Section Qs of a 4th-order Butterworth: 1 / (2 cos(pi/8)), 1 / (2 cos(3 pi/8)).
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_6];

/// Tail padding in periods of the lowest edge frequency; the slowest pole
/// decays by e^-38 over this span.
const TAIL_PERIODS: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Lowpass,
    Bandpass,
    Highpass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn design(fc: f64, fs: f64, q: f64, highpass: bool) -> Biquad {
        let w0 = 2.0 * std::f64::consts::PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Biquad {
            b: b.map(|v| v / a0),
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// In-place transposed direct form II, zero initial state.
    fn run(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + s1;
            s1 = b1 * input - a1 * y + s2;
            s2 = b2 * input - a2 * y;
            *v = y;
        }
    }

    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (1.0 + z1 * self.a[0] + z2 * self.a[1])
    }
}

fn butterworth4(fc: f64, fs: f64, highpass: bool) -> [Biquad; 2] {
    BUTTERWORTH4_Q.map(|q| Biquad::design(fc, fs, q, highpass))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    /// Lower and upper edges; `None` where the branch is open.
    pub edges_hz: (Option<f64>, Option<f64>),
    sections: Vec<Biquad>,
    pad: usize,
}

impl Branch {
    /// Zero-phase filtering; output has the input's length.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = Vec::with_capacity(x.len() + self.pad);
        buf.extend_from_slice(x);
        buf.resize(x.len() + self.pad, 0.0);
        for s in &self.sections {
            s.run(&mut buf);
        }
        buf.reverse();
        for s in &self.sections {
            s.run(&mut buf);
        }
        buf.reverse();
        buf.truncate(x.len());
        buf
    }

    /// Real, non-negative frequency response of the forward-backward
    /// branch, `|H(f)|^2` for the single-pass response `H`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
        self.sections
            .iter()
            .map(|s| s.response(w).norm_sqr())
            .product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub spec: BandSpec,
    pub branches: Vec<Branch>,
}

impl FilterBank {
    pub fn new(spec: &BandSpec) -> Result<FilterBank> {
        spec.validate()?;
        let fs = f64::from(spec.sample_rate_hz);
        let xo = spec.crossovers_hz();
        let last = spec.num_bands() - 1;
        let branches = (0..spec.num_bands())
            .map(|band| {
                let lo = (band > 0).then(|| xo[band - 1]);
                let hi = (band < last).then(|| xo[band]);
                let mut sections = Vec::new();
                if let Some(f) = lo {
                    sections.extend(butterworth4(f, fs, true));
                }
                if let Some(f) = hi {
                    sections.extend(butterworth4(f, fs, false));
                }
                let slowest = lo.or(hi).expect("at least two bands");
                let kind = match (lo, hi) {
                    (None, _) => BranchKind::Lowpass,
                    (_, None) => BranchKind::Highpass,
                    _ => BranchKind::Bandpass,
                };
                Branch {
                    kind,
                    edges_hz: (lo, hi),
                    sections,
                    pad: (TAIL_PERIODS * fs / slowest).ceil() as usize,
                }
            })
            .collect();
        Ok(FilterBank {
            spec: spec.clone(),
            branches,
        })
    }

    pub fn num_bands(&self) -> usize {
        self.branches.len()
    }

    pub fn branch(&self, band: usize) -> &Branch {
        &self.branches[band]
    }

    pub fn sample_rate(&self) -> f64 {
        f64::from(self.spec.sample_rate_hz)
    }

    /// Response of the summed branches (zero-phase, so the sum is real).
    pub fn sum_response(&self, freq_hz: f64) -> f64 {
        let fs = self.sample_rate();
        self.branches.iter().map(|b| b.response(freq_hz, fs)).sum()
    }

    /// Filter each band buffer by its branch and sum in band order.
    pub fn apply(&self, rir_bands: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rir_bands.len() != self.num_bands() {
            return Err(Error::LengthMismatch(format!(
                "expected {} band buffers, got {}",
                self.num_bands(),
                rir_bands.len()
            )));
        }
        let len = rir_bands[0].len();
        if rir_bands.iter().any(|b| b.len() != len) {
            return Err(Error::LengthMismatch("band buffers differ in length".into()));
        }
        let mut out = vec![0.0; len];
        for (branch, x) in self.branches.iter().zip(rir_bands) {
            for (o, y) in out.iter_mut().zip(branch.filter(x)) {
                *o += y;
            }
        }
        Ok(out)
    }
}
