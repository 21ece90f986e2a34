//! Audio file input/output and sample-rate conversion.
//!
//! Readers accept WAV (integer or float PCM) and FLAC and keep only the first
//! channel. Output is always mono 32-bit float WAV.
//!
//! Resampling is rational polyphase: for a ratio `up/down` the prototype is a
//! Kaiser-windowed sinc (beta 8.6) with cutoff at 95% of the lower Nyquist
//! frequency and 16 zero crossings on each side, tabulated for each of the
//! `up` output phases.

use std::path::Path;

use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 48_000;

const ZERO_CROSSINGS: f64 = 16.0;
const CUTOFF: f64 = 0.95;
const KAISER_BETA: f64 = 8.6;

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

impl Audio {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn resampled(self, rate_hz: u32) -> Audio {
        if rate_hz == self.sample_rate_hz {
            return self;
        }
        Audio {
            samples: resample(&self.samples, self.sample_rate_hz, rate_hz),
            sample_rate_hz: rate_hz,
        }
    }
}

fn audio_err(path: &Path, message: impl ToString) -> Error {
    Error::Audio {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Read the first channel of a WAV or FLAC file, scaled to [-1, 1).
pub fn read_audio(path: &Path) -> Result<Audio> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("flac") => read_flac(path),
        _ => read_wav(path),
    }
}

/// [`read_audio`] followed by resampling to 48 kHz.
pub fn read_audio_48k(path: &Path) -> Result<Audio> {
    Ok(read_audio(path)?.resampled(TARGET_RATE))
}

fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .step_by(channels)
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| audio_err(path, e))?;
    Ok(Audio {
        sample_rate_hz: spec.sample_rate,
        samples,
    })
}

fn read_flac(path: &Path) -> Result<Audio> {
    let mut reader = claxon::FlacReader::open(path).map_err(|e| audio_err(path, e))?;
    let info = reader.streaminfo();
    let channels = info.channels.max(1) as usize;
    let scale = 1.0 / f64::from(1u32 << (info.bits_per_sample - 1));
    let samples = reader
        .samples()
        .step_by(channels)
        .map(|s| s.map(|v| f64::from(v) * scale))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| audio_err(path, e))?;
    Ok(Audio {
        sample_rate_hz: info.sample_rate,
        samples,
    })
}

/// Mono 32-bit float WAV.
pub fn write_wav_f32(path: &Path, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| audio_err(path, e))?;
    for &s in samples {
        writer.write_sample(s as f32).map_err(|e| audio_err(path, e))?;
    }
    writer.finalize().map_err(|e| audio_err(path, e))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Rational polyphase resampler; output length `ceil(len * to / from)`.
pub fn resample(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz || x.is_empty() {
        return x.to_vec();
    }
    let g = gcd(u64::from(from_hz), u64::from(to_hz));
    let up = u64::from(to_hz) / g;
    let down = u64::from(from_hz) / g;
    let ratio = up as f64 / down as f64;
    // Cutoff as a fraction of the input Nyquist frequency.
    let cutoff = CUTOFF * ratio.min(1.0);
    let half_width = (ZERO_CROSSINGS / cutoff).ceil() as i64;
    let taps = 2 * half_width as usize;
    let i0_beta = bessel_i0(KAISER_BETA);

    // Phase p covers output times whose fractional input position is p / up.
    // Tap k sits at input offset (k - half_width + 1) relative to floor(t).
    let table: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            (0..taps)
                .map(|k| {
                    let dt = (k as i64 - half_width + 1) as f64 - frac;
                    let u = dt / half_width as f64;
                    if u.abs() >= 1.0 {
                        return 0.0;
                    }
                    let w = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta;
                    let arg = std::f64::consts::PI * cutoff * dt;
                    let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
                    cutoff * sinc * w
                })
                .collect()
        })
        .collect();

    let out_len = (x.len() as u64 * up).div_ceil(down) as usize;
    let n = x.len() as i64;
    (0..out_len as u64)
        .map(|j| {
            let pos = j * down;
            let base = (pos / up) as i64;
            let phase = &table[(pos % up) as usize];
            let first = base - half_width + 1;
            let mut acc = 0.0;
            for (k, c) in phase.iter().enumerate() {
                let i = first + k as i64;
                if (0..n).contains(&i) {
                    acc += c * x[i as usize];
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(f: f64, fs: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / f64::from(fs)).sin())
            .collect()
    }

    #[test]
    fn upsampling_preserves_sines() {
        for (from, f) in [(16_000, 1000.0), (44_100, 5000.0), (22_050, 300.0)] {
            let x = sine(f, from, from as usize / 2);
            let y = resample(&x, from, 48_000);
            assert_eq!(y.len(), (x.len() as u64 * 48_000).div_ceil(u64::from(from)) as usize);
            let reference = sine(f, 48_000, y.len());
            // skip filter edges
            let err = y[2000..y.len() - 2000]
                .iter()
                .zip(&reference[2000..])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 2e-3, "{from}: {err}");
        }
    }

    #[test]
    fn downsampling_rejects_above_nyquist() {
        let x = sine(20_000.0, 48_000, 48_000);
        let y = resample(&x, 48_000, 16_000);
        let rms = (y[1000..y.len() - 1000].iter().map(|v| v * v).sum::<f64>() / (y.len() - 2000) as f64).sqrt();
        assert!(rms < 1e-3, "{rms}");
        let x = sine(1000.0, 48_000, 48_000);
        let y = resample(&x, 48_000, 16_000);
        let reference = sine(1000.0, 16_000, y.len());
        let err = y[500..y.len() - 500]
            .iter()
            .zip(&reference[500..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "{err}");
    }

    #[test]
    fn wav_round_trip_and_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = vec![0.25, -0.5, 0.125];
        write_wav_f32(&p, &x, 48_000).unwrap();
        let a = read_audio(&p).unwrap();
        assert_eq!(a.samples, x);
        assert_eq!(a.sample_rate_hz, 48_000);

        let p2 = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p2, spec).unwrap();
        for (l, r) in [(16384i16, -1i16), (-8192, 5)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let b = read_audio(&p2).unwrap();
        assert_eq!(b.samples, vec![0.5, -0.25]);
        assert_eq!(b.sample_rate_hz, 16_000);
    }

    #[test]
    fn unreadable_file_is_an_audio_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.wav");
        std::fs::write(&p, b"not audio").unwrap();
        assert!(matches!(read_audio(&p), Err(Error::Audio { .. })));
    }
}
