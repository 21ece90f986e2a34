//! Batch generation: sample scenes, render them on a worker pool, measure
//! each result and write audio plus a sorted JSONL manifest.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio;
use crate::error::{Error, Result};
use crate::filterbank::FILTER_DESIGN;
use crate::ism::{AMPLITUDE_CONVENTION, SINC_TAPS};
use crate::render::{render_variant, render_warnings, RenderContext};
use crate::room::{sample_room, RoomConfig, Variant, PLACEMENT_INTERPRETATION};
use crate::seed;
use crate::validate::analyze;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const RIR_DIR: &str = "rirs";
pub const WORKERS_ENV: &str = "MBRIR_WORKERS";
pub const SPLIT_FRACTIONS: [f64; 3] = [0.70, 0.15, 0.15];
/// Bands (0-based) held to the decay gates: 250 Hz to 2 kHz.
pub const GATED_BANDS: [usize; 4] = [1, 2, 3, 4];
pub const T60_TOLERANCE: f64 = 0.20;
const AUDIO_FORMAT: &str = "wav/mono/f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// One emitted (or failed) impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(flatten)]
    pub config: RoomConfig,
    /// Relative to the output directory; absent when rendering failed.
    pub rir_path: Option<String>,
    pub render_params_digest: String,
    pub split: Split,
    pub length_samples: usize,
    pub onset_sample: Option<usize>,
    pub measured_t60_broadband_s: Option<f64>,
    pub measured_t60_bands_s: Vec<Option<f64>>,
    /// Relative deviation of each gated band from its target.
    pub t60_rel_error_bands: Vec<Option<f64>>,
    pub extrapolated: bool,
    pub gate_passed: bool,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub render_time_s: f64,
}

impl ManifestRecord {
    /// Copy with the wall-clock field zeroed, for byte comparisons.
    pub fn timeless(&self) -> ManifestRecord {
        ManifestRecord {
            render_time_s: 0.0,
            ..self.clone()
        }
    }

    /// Every gated band within tolerance of its target.
    pub fn t60_within_tolerance(&self) -> bool {
        !self.t60_rel_error_bands.is_empty()
            && self
                .t60_rel_error_bands
                .iter()
                .all(|e| e.is_some_and(|e| e.abs() <= T60_TOLERANCE))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.gate_passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| !r.gate_passed)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.records)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        Ok(Manifest {
            records: read_jsonl(path)?,
        })
    }
}

/// Parse one JSON object per non-empty line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, item)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Scene `index` of a batch seeded by `master_seed`.
pub fn sample_config(master_seed: u64, index: usize, variant: Variant, ctx: &RenderContext) -> Result<RoomConfig> {
    let mut config = sample_room(seed::derive_seed(master_seed, index as u64), variant, &ctx.params)?;
    config.id = format!("room{index:06}");
    Ok(config)
}

pub fn sample_configs(count: usize, master_seed: u64, variant: Variant, ctx: &RenderContext) -> Result<Vec<RoomConfig>> {
    (0..count).map(|i| sample_config(master_seed, i, variant, ctx)).collect()
}

/// The same scenes retagged for each variant; SB jobs use the scalar mean.
pub fn shared_geometry_export(configs: &[RoomConfig], variants: &[Variant]) -> Vec<RoomConfig> {
    variants
        .iter()
        .flat_map(|&v| configs.iter().map(move |c| c.with_variant(v)))
        .collect()
}

/// Stable hash of every knob that can change the rendered audio of
/// `variant` under `ctx`. Tables the variant does not use are left out.
pub fn render_params_digest(ctx: &RenderContext, variant: Variant) -> String {
    let p = &ctx.params;
    let mut parts: Vec<(&str, String)> = vec![
        ("variant", variant.cli_name().to_string()),
        ("sample_rate_hz", p.bands.sample_rate_hz.to_string()),
        ("speed_of_sound", format!("{:?}", p.speed_of_sound)),
        ("sabine_constant", format!("{:?}", p.sabine_constant)),
        ("min_distance_m", format!("{:?}", p.min_distance_m)),
        ("image_budget", p.image_budget.to_string()),
        ("interp", format!("{:?}", ctx.interp)),
        ("sinc_taps", SINC_TAPS.to_string()),
        ("amplitude", AMPLITUDE_CONVENTION.to_string()),
        ("placement", PLACEMENT_INTERPRETATION.to_string()),
        ("audio", AUDIO_FORMAT.to_string()),
    ];
    if variant.is_multiband() {
        parts.push(("band_centers_hz", format!("{:?}", p.bands.centers_hz)));
        parts.push(("filter_design", FILTER_DESIGN.to_string()));
    }
    if variant.has_source_directivity() {
        parts.push(("source_table", ctx.source_table.digest()));
    }
    if variant.has_receiver_directivity() {
        parts.push(("receiver_filters", ctx.receiver_filters.digest()));
    }
    let mut h = Sha256::new();
    for (k, v) in parts {
        h.update(k.as_bytes());
        h.update([0x1f]);
        h.update(v.as_bytes());
        h.update([0x1e]);
    }
    format!("{:x}", h.finalize())
}

/// Split labels for `count` records in a seeded random order.
pub fn assign_splits(count: usize, master_seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut seed::rng(seed::stream(master_seed, b"split")));
    let n_train = (SPLIT_FRACTIONS[0] * count as f64).round() as usize;
    let n_valid = (SPLIT_FRACTIONS[1] * count as f64).round() as usize;
    let mut out = vec![Split::Test; count];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    out
}

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub workers: usize,
    /// Seeds the split assignment.
    pub seed: u64,
    #[doc(hidden)]
    pub inject_failures: HashSet<String>,
}

impl RenderOptions {
    pub fn new(workers: usize, seed: u64) -> Self {
        RenderOptions {
            workers: workers.max(1),
            seed,
            inject_failures: HashSet::new(),
        }
    }
}

fn prepare_out_dir(out_dir: &Path) -> Result<PathBuf> {
    let rirs = out_dir.join(RIR_DIR);
    std::fs::create_dir_all(&rirs).map_err(|source| Error::OutDirUnwritable {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let probe = out_dir.join(".write-probe");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|source| Error::OutDirUnwritable {
            path: out_dir.to_path_buf(),
            source,
        })?;
    Ok(rirs)
}

fn relative_error(measured: Option<f64>, target: f64) -> Option<f64> {
    measured.map(|m| (m - target) / target)
}

fn process(
    config: &RoomConfig,
    split: Split,
    digest: &str,
    ctx: &RenderContext,
    out_dir: &Path,
    inject: bool,
) -> ManifestRecord {
    let started = Instant::now();
    let variant = config.variant;
    let mut record = ManifestRecord {
        config: config.clone(),
        rir_path: None,
        render_params_digest: digest.to_string(),
        split,
        length_samples: 0,
        onset_sample: None,
        measured_t60_broadband_s: None,
        measured_t60_bands_s: Vec::new(),
        t60_rel_error_bands: Vec::new(),
        extrapolated: false,
        gate_passed: false,
        warnings: render_warnings(config, variant, &ctx.params),
        error: None,
        render_time_s: 0.0,
    };
    let rendered = if inject {
        Err(Error::Injected(config.id.clone()))
    } else {
        render_variant(config, variant, ctx)
    };
    let rir = match rendered {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{}: {e}", config.id);
            record.error = Some(e.to_string());
            record.render_time_s = started.elapsed().as_secs_f64();
            return record;
        }
    };
    let rel = format!("{RIR_DIR}/{}-{}.wav", config.id, variant.cli_name());
    if let Err(e) = audio::write_wav_f32(&out_dir.join(&rel), &rir.samples, rir.sample_rate_hz) {
        record.error = Some(e.to_string());
        record.render_time_s = started.elapsed().as_secs_f64();
        return record;
    }
    let report = analyze(&rir, &ctx.bank, None, &rel);
    let targets: Vec<f64> = if variant.is_multiband() {
        GATED_BANDS.iter().map(|&b| config.t60_bands_s[b]).collect()
    } else {
        vec![config.t60_scalar_s; GATED_BANDS.len()]
    };
    record.t60_rel_error_bands = GATED_BANDS
        .iter()
        .zip(&targets)
        .map(|(&b, &t)| relative_error(report.t60_bands_s[b], t))
        .collect();
    record.gate_passed = rir.samples.iter().all(|v| v.is_finite())
        && report.onset_sample.is_some()
        && report.t60_broadband_s.is_some()
        && GATED_BANDS.iter().all(|&b| report.t60_bands_s[b].is_some());
    record.rir_path = Some(rel);
    record.length_samples = report.length_samples;
    record.onset_sample = report.onset_sample;
    record.measured_t60_broadband_s = report.t60_broadband_s;
    record.measured_t60_bands_s = report.t60_bands_s;
    record.extrapolated = report.extrapolated;
    record.warnings.extend(report.warnings);
    record.render_time_s = started.elapsed().as_secs_f64();
    record
}

/// Render every config (as its own variant) into `out_dir`. Per-record
/// failures end up in the manifest; only an unusable output directory is
/// an error.
pub fn render_configs(configs: &[RoomConfig], ctx: &RenderContext, out_dir: &Path, opts: &RenderOptions) -> Result<Manifest> {
    prepare_out_dir(out_dir)?;
    let splits = assign_splits(configs.len(), opts.seed);
    let mut digests = std::collections::HashMap::new();
    for c in configs {
        digests
            .entry(c.variant)
            .or_insert_with(|| render_params_digest(ctx, c.variant));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel();
    pool.install(|| {
        configs
            .par_iter()
            .zip(splits.par_iter())
            .for_each_with(tx, |tx, (config, &split)| {
                let inject = opts.inject_failures.contains(&config.id);
                let record = process(config, split, &digests[&config.variant], ctx, out_dir, inject);
                log::debug!("{} rendered in {:.3} s", record.config.id, record.render_time_s);
                // receiver outlives the pool
                let _ = tx.send(record);
            });
    });
    let mut records: Vec<ManifestRecord> = rx.into_iter().collect();
    records.sort_by(|a, b| a.config.id.cmp(&b.config.id).then(a.config.variant.cli_name().cmp(b.config.variant.cli_name())));
    let manifest = Manifest { records };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Sample `count` scenes from `master_seed` and render them as `variant`.
pub fn generate(
    count: usize,
    master_seed: u64,
    variant: Variant,
    ctx: &RenderContext,
    out_dir: &Path,
    opts: &RenderOptions,
) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let configs = sample_configs(count, master_seed, variant, ctx)?;
    render_configs(&configs, ctx, out_dir, opts)
}
