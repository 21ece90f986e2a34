//! Clean/degraded utterance pairs: chunk selection, onset-aligned
//! reverberation, SNR mixing, and simple intrusive quality measures.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{self, TARGET_RATE};
use crate::dsp::{convolve, power};
use crate::error::{Error, Result};
use crate::pipeline::write_jsonl;
use crate::seed;
use crate::validate::detect_onset_default;

pub const MIXTURES_FILE: &str = "mixtures.jsonl";
pub const CHUNK_SAMPLES: usize = 4 * TARGET_RATE as usize;
pub const SILENCE_GATE_DBFS: f64 = -40.0;
pub const PEAK_CEILING_DBFS: f64 = -3.0;
pub const SI_SDR_CAP_DB: f64 = 100.0;
pub const SNR_RANGE_DB: (f64, f64) = (0.0, 30.0);
pub const REUSE_POLICY: &str = "speech round-robin; noise and rir seeded uniform with replacement";
const LSD_FRAME: usize = 1024;
const LSD_HOP: usize = 512;
const LSD_FLOOR_DB: f64 = -80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignalModel {
    /// x = (y * h) + g n
    ReverbSpeechPlusNoise,
    /// x = (y + g n) * h
    ReverbSum,
}

impl FromStr for SignalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "reverb_speech_plus_noise" => Ok(SignalModel::ReverbSpeechPlusNoise),
            "b" | "reverb_sum" => Ok(SignalModel::ReverbSum),
            other => Err(Error::InvalidParameter(format!("unknown signal model {other:?}"))),
        }
    }
}

impl fmt::Display for SignalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalModel::ReverbSpeechPlusNoise => "a",
            SignalModel::ReverbSum => "b",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub start: usize,
    pub samples: Vec<f64>,
    /// No window passed the silence gate; the loudest one was taken.
    pub fallback: bool,
}

/// A uniformly random 4 s window whose RMS clears the silence gate, or the
/// loudest window when none does.
pub fn pick_chunk(speech: &[f64], rng_seed: u64) -> Result<Chunk> {
    if speech.len() < CHUNK_SAMPLES {
        return Err(Error::TooShort {
            needed: CHUNK_SAMPLES,
            got: speech.len(),
        });
    }
    let mut prefix = Vec::with_capacity(speech.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in speech {
        acc += v * v;
        prefix.push(acc);
    }
    let starts = speech.len() - CHUNK_SAMPLES + 1;
    let gate = CHUNK_SAMPLES as f64 * 10f64.powf(SILENCE_GATE_DBFS / 10.0);
    let energy = |s: usize| prefix[s + CHUNK_SAMPLES] - prefix[s];
    let qualifying: Vec<usize> = (0..starts).filter(|&s| energy(s) >= gate).collect();
    let (start, fallback) = if qualifying.is_empty() {
        let mut best = 0;
        for s in 1..starts {
            if energy(s) > energy(best) {
                best = s;
            }
        }
        (best, true)
    } else {
        let mut rng = seed::rng(rng_seed);
        (qualifying[rng.random_range(0..qualifying.len())], false)
    };
    Ok(Chunk {
        start,
        samples: speech[start..start + CHUNK_SAMPLES].to_vec(),
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub onset_shift_samples: usize,
    pub noise_gain: f64,
    pub output_gain: f64,
    /// Clean power over scaled-noise power, before output normalization.
    pub achieved_snr_db: f64,
}

/// Drop everything before the detected onset and any exact-zero tail.
pub fn align_rir(h: &[f64]) -> Result<(Vec<f64>, usize)> {
    let onset = detect_onset_default(h, TARGET_RATE)?;
    let mut aligned = h[onset..].to_vec();
    while aligned.len() > 1 && aligned.last() == Some(&0.0) {
        aligned.pop();
    }
    Ok((aligned, onset))
}

/// Mix clean chunk `y` with noise chunk `n` through RIR `h` at `snr_db`.
/// Both outputs are truncated to the chunk length and share one peak
/// normalization gain.
pub fn make_mixture(y: &[f64], n: &[f64], h: &[f64], snr_db: f64, model: SignalModel) -> Result<Mixture> {
    if y.len() != n.len() {
        return Err(Error::LengthMismatch(format!(
            "speech has {} samples, noise {}",
            y.len(),
            n.len()
        )));
    }
    let p_y = power(y);
    let p_n = power(n);
    if p_y == 0.0 {
        return Err(Error::ZeroSpeech);
    }
    if p_n == 0.0 {
        return Err(Error::ZeroNoise);
    }
    let (h_aligned, onset) = align_rir(h)?;
    let g = (p_y / (p_n * 10f64.powf(snr_db / 10.0))).sqrt();
    let len = y.len();
    let mut x = match model {
        SignalModel::ReverbSpeechPlusNoise => {
            let mut rev = convolve(y, &h_aligned);
            rev.truncate(len);
            for (r, v) in rev.iter_mut().zip(n) {
                *r += g * v;
            }
            rev
        }
        SignalModel::ReverbSum => {
            let dry: Vec<f64> = y.iter().zip(n).map(|(a, b)| a + g * b).collect();
            let mut rev = convolve(&dry, &h_aligned);
            rev.truncate(len);
            rev
        }
    };
    let scaled_noise: Vec<f64> = n.iter().map(|v| g * v).collect();
    let achieved_snr_db = 10.0 * (p_y / power(&scaled_noise)).log10();
    let peak = x.iter().chain(y).fold(0.0_f64, |m, v| m.max(v.abs()));
    let ceiling = 10f64.powf(PEAK_CEILING_DBFS / 20.0);
    let output_gain = if peak > ceiling { ceiling / peak } else { 1.0 };
    let mut y_out = y.to_vec();
    if output_gain != 1.0 {
        x.iter_mut().for_each(|v| *v *= output_gain);
        y_out.iter_mut().for_each(|v| *v *= output_gain);
    }
    Ok(Mixture {
        x,
        y: y_out,
        onset_shift_samples: onset,
        noise_gain: g,
        output_gain,
        achieved_snr_db,
    })
}

fn check_pair(reference: &[f64], estimate: &[f64]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.iter().all(|v| *v == 0.0) {
        return Err(Error::SilentReference);
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at +100 dB.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_pair(reference, estimate)?;
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    let er: f64 = reference.iter().zip(estimate).map(|(r, e)| r * e).sum();
    let alpha = er / rr;
    let mut target = 0.0;
    let mut noise = 0.0;
    for (r, e) in reference.iter().zip(estimate) {
        let t = alpha * r;
        target += t * t;
        noise += (e - t) * (e - t);
    }
    if noise == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SI_SDR_CAP_DB))
}

/// Mean over half-overlapping 1024-point Hann frames of the RMS (over bins)
/// difference of the dB power spectra; powers floored at -80 dB.
pub fn log_spectral_distance(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_pair(reference, estimate)?;
    let frames = if reference.len() <= LSD_FRAME {
        1
    } else {
        1 + (reference.len() - LSD_FRAME).div_ceil(LSD_HOP)
    };
    let window: Vec<f64> = (0..LSD_FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / LSD_FRAME as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(LSD_FRAME);
    let floor = 10f64.powf(LSD_FLOOR_DB / 10.0);
    let spectrum_db = |x: &[f64], start: usize| -> Vec<f64> {
        let mut buf: Vec<Complex64> = (0..LSD_FRAME)
            .map(|i| Complex64::new(x.get(start + i).copied().unwrap_or(0.0) * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        buf[..=LSD_FRAME / 2]
            .iter()
            .map(|c| 10.0 * c.norm_sqr().max(floor).log10())
            .collect()
    };
    let mut total = 0.0;
    for f in 0..frames {
        let a = spectrum_db(reference, f * LSD_HOP);
        let b = spectrum_db(estimate, f * LSD_HOP);
        let ms = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64;
        total += ms.sqrt();
    }
    Ok(total / frames as f64)
}

/// Everything needed to rebuild one (x, y) pair from its source files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub id: String,
    pub speech_path: String,
    pub noise_path: String,
    pub rir_path: String,
    pub chunk_start_s: f64,
    pub chunk_start_sample: usize,
    pub chunk_fallback: bool,
    pub noise_start_sample: usize,
    pub snr_db: f64,
    pub model: SignalModel,
    pub onset_shift_samples: usize,
    pub noise_gain: f64,
    pub output_gain: f64,
    pub seed: u64,
    pub reuse_policy: String,
}

/// Audio files (`.wav`, `.flac`) directly inside `dir`, sorted by name.
pub fn list_audio_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "wav" | "flac"))
        })
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct MixSources {
    pub speech: Vec<PathBuf>,
    pub noise: Vec<PathBuf>,
    pub rirs: Vec<PathBuf>,
}

impl MixSources {
    pub fn from_dirs(speech: &Path, noise: &Path, rirs: &Path) -> Result<MixSources> {
        let s = MixSources {
            speech: list_audio_files(speech)?,
            noise: list_audio_files(noise)?,
            rirs: list_audio_files(rirs)?,
        };
        for (name, v) in [("speech", &s.speech), ("noise", &s.noise), ("rir", &s.rirs)] {
            if v.is_empty() {
                return Err(Error::InvalidParameter(format!("no {name} audio files found")));
            }
        }
        Ok(s)
    }
}

/// Choices for record `index`, before any audio is read.
fn plan_record(sources: &MixSources, index: usize, master_seed: u64, model: SignalModel) -> (u64, MixtureRecord) {
    let rec_seed = seed::derive_seed(master_seed, index as u64);
    let mut rng = seed::rng(seed::stream(rec_seed, b"choices"));
    let noise = rng.random_range(0..sources.noise.len());
    let rir = rng.random_range(0..sources.rirs.len());
    let snr_db = rng.random_range(SNR_RANGE_DB.0..SNR_RANGE_DB.1);
    let record = MixtureRecord {
        id: format!("mix{index:06}"),
        speech_path: sources.speech[index % sources.speech.len()].display().to_string(),
        noise_path: sources.noise[noise].display().to_string(),
        rir_path: sources.rirs[rir].display().to_string(),
        chunk_start_s: 0.0,
        chunk_start_sample: 0,
        chunk_fallback: false,
        noise_start_sample: 0,
        snr_db,
        model,
        onset_shift_samples: 0,
        noise_gain: 0.0,
        output_gain: 1.0,
        seed: rec_seed,
        reuse_policy: REUSE_POLICY.to_string(),
    };
    (rec_seed, record)
}

fn noise_chunk(noise: &[f64], rec_seed: u64) -> Result<(usize, Vec<f64>)> {
    if noise.len() < CHUNK_SAMPLES {
        return Err(Error::TooShort {
            needed: CHUNK_SAMPLES,
            got: noise.len(),
        });
    }
    let mut rng = seed::rng(seed::stream(rec_seed, b"noise"));
    let start = rng.random_range(0..=noise.len() - CHUNK_SAMPLES);
    Ok((start, noise[start..start + CHUNK_SAMPLES].to_vec()))
}

/// Fill in the audio-dependent fields of `record` and produce its pair.
fn realize(mut record: MixtureRecord) -> Result<(MixtureRecord, Mixture)> {
    let speech = audio::read_audio_48k(Path::new(&record.speech_path))?;
    let noise = audio::read_audio_48k(Path::new(&record.noise_path))?;
    let rir = audio::read_audio_48k(Path::new(&record.rir_path))?;
    let chunk = pick_chunk(&speech.samples, seed::stream(record.seed, b"chunk"))?;
    let (noise_start, n) = noise_chunk(&noise.samples, record.seed)?;
    let mix = make_mixture(&chunk.samples, &n, &rir.samples, record.snr_db, record.model)?;
    record.chunk_start_sample = chunk.start;
    record.chunk_start_s = chunk.start as f64 / f64::from(TARGET_RATE);
    record.chunk_fallback = chunk.fallback;
    record.noise_start_sample = noise_start;
    record.onset_shift_samples = mix.onset_shift_samples;
    record.noise_gain = mix.noise_gain;
    record.output_gain = mix.output_gain;
    Ok((record, mix))
}

/// Rebuild the (x, y) pair a record describes.
pub fn reproduce(record: &MixtureRecord) -> Result<Mixture> {
    Ok(realize(record.clone())?.1)
}

/// Build `count` pairs under `out_dir/<id>/{x,y}.wav` plus
/// `out_dir/mixtures.jsonl`. Speech files are used round-robin; noise and
/// RIR files are drawn uniformly with replacement.
pub fn build_mixtures(
    sources: &MixSources,
    count: usize,
    master_seed: u64,
    model: SignalModel,
    out_dir: &Path,
) -> Result<Vec<MixtureRecord>> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::OutDirUnwritable {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let records: Vec<MixtureRecord> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (_, planned) = plan_record(sources, i, master_seed, model);
            let (record, mix) = realize(planned)?;
            let dir = out_dir.join(&record.id);
            std::fs::create_dir_all(&dir)?;
            audio::write_wav_f32(&dir.join("x.wav"), &mix.x, TARGET_RATE)?;
            audio::write_wav_f32(&dir.join("y.wav"), &mix.y, TARGET_RATE)?;
            Ok(record)
        })
        .collect::<Result<_>>()?;
    write_jsonl(&out_dir.join(MIXTURES_FILE), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64, rms: f64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        (0..len)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                rms * v
            })
            .collect()
    }

    fn impulse(len: usize, at: usize) -> Vec<f64> {
        let mut h = vec![0.0; len];
        h[at] = 1.0;
        h
    }

    #[test]
    fn exact_length_file_starts_at_zero() {
        let c = pick_chunk(&noise(CHUNK_SAMPLES, 1, 0.1), 3).unwrap();
        assert_eq!(c.start, 0);
        assert!(!c.fallback);
        assert!(matches!(pick_chunk(&[0.1; 100], 1), Err(Error::TooShort { .. })));
    }

    #[test]
    fn silent_file_falls_back_to_loudest() {
        let mut x = vec![0.0; 6 * 48_000];
        x[5 * 48_000 + 10] = 1e-4;
        let c = pick_chunk(&x, 1).unwrap();
        assert!(c.fallback);
        assert_eq!(c.start, 5 * 48_000 + 10 - CHUNK_SAMPLES + 1);
    }

    #[test]
    fn gate_admits_only_speech_windows() {
        // silence for 5 s, then 5 s of a constant-power tone just above the
        // gate: only windows lying (almost) entirely in the tone qualify
        let fs = 48_000;
        let amp = (2.0 * 1.0001e-4f64).sqrt();
        let x: Vec<f64> = (0..10 * fs)
            .map(|i| {
                if i < 5 * fs {
                    0.0
                } else {
                    amp * (2.0 * std::f64::consts::PI * 100.0 * i as f64 / fs as f64).sin()
                }
            })
            .collect();
        // window energy fraction needed: 1 / 1.0001 of 4 s
        let earliest = 5.0 - 4.0 * (1.0 - 1.0 / 1.0001);
        for s in 0..50 {
            let c = pick_chunk(&x, s).unwrap();
            let t = c.start as f64 / fs as f64;
            assert!(!c.fallback);
            assert!(t >= earliest - 0.002 && t <= 6.0, "{t}");
        }
    }

    #[test]
    fn snr_is_exact() {
        let y = noise(CHUNK_SAMPLES, 1, 0.1);
        let n = noise(CHUNK_SAMPLES, 2, 0.3);
        let mut h = noise(2000, 3, 0.01);
        h[50] = 1.0;
        for model in [SignalModel::ReverbSpeechPlusNoise, SignalModel::ReverbSum] {
            for snr in [0.0, 7.5, 30.0] {
                let m = make_mixture(&y, &n, &h, snr, model).unwrap();
                assert!((m.achieved_snr_db - snr).abs() < 1e-6);
                assert_eq!(m.x.len(), CHUNK_SAMPLES);
                assert_eq!(m.onset_shift_samples, 50);
            }
        }
        let m = make_mixture(&y, &n, &h, 0.0, SignalModel::ReverbSpeechPlusNoise).unwrap();
        let pn = power(&n) * m.noise_gain * m.noise_gain;
        assert!((power(&y) / pn - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_rir_models_agree_bitwise() {
        let y = noise(CHUNK_SAMPLES, 4, 0.05);
        let n = noise(CHUNK_SAMPLES, 5, 0.05);
        let h = impulse(500, 37);
        let a = make_mixture(&y, &n, &h, 5.0, SignalModel::ReverbSpeechPlusNoise).unwrap();
        let b = make_mixture(&y, &n, &h, 5.0, SignalModel::ReverbSum).unwrap();
        assert_eq!(a, b);
        let g = a.noise_gain;
        for i in 0..CHUNK_SAMPLES {
            assert_eq!(a.x[i], (y[i] + g * n[i]) * a.output_gain);
        }
    }

    #[test]
    fn peak_normalization_shared() {
        let y = noise(CHUNK_SAMPLES, 6, 0.5);
        let n = noise(CHUNK_SAMPLES, 7, 0.5);
        let m = make_mixture(&y, &n, &impulse(10, 0), 0.0, SignalModel::ReverbSpeechPlusNoise).unwrap();
        assert!(m.output_gain < 1.0);
        let peak = m.x.iter().chain(&m.y).fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((20.0 * peak.log10() + 3.0).abs() < 1e-9);
        assert_eq!(m.y[5], y[5] * m.output_gain);
    }

    #[test]
    fn zero_inputs_rejected() {
        let y = noise(100, 1, 0.1);
        let h = impulse(4, 0);
        assert!(matches!(make_mixture(&y, &[0.0; 100], &h, 0.0, SignalModel::ReverbSum), Err(Error::ZeroNoise)));
        assert!(matches!(make_mixture(&[0.0; 100], &y, &h, 0.0, SignalModel::ReverbSum), Err(Error::ZeroSpeech)));
    }

    #[test]
    fn si_sdr_properties() {
        let r = noise(48_000, 8, 1.0);
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        let half: Vec<f64> = r.iter().map(|v| 0.5 * v).collect();
        assert_eq!(si_sdr(&r, &half).unwrap(), SI_SDR_CAP_DB);
        assert!(matches!(si_sdr(&[0.0; 10], &[1.0; 10]), Err(Error::SilentReference)));
        let mut total = 0.0;
        for t in 0..100 {
            let e: Vec<f64> = r.iter().zip(noise(48_000, 100 + t, 1.0)).map(|(a, b)| a + b).collect();
            total += si_sdr(&r, &e).unwrap();
        }
        assert!((total / 100.0).abs() < 0.1, "{}", total / 100.0);
    }

    #[test]
    fn lsd_zero_for_identical() {
        let r = noise(10_000, 9, 0.3);
        assert_eq!(log_spectral_distance(&r, &r).unwrap(), 0.0);
        let q: Vec<f64> = r.iter().map(|v| 0.5 * v).collect();
        // a 6.02 dB level difference in every bin
        assert!((log_spectral_distance(&r, &q).unwrap() - 6.0206).abs() < 1e-3);
    }
}
