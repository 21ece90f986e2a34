use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mbrir::audio;
use mbrir::directivity::{DirectivityTable, ReceiverFilterSet};
use mbrir::gamma_fit::fit_gamma;
use mbrir::mixture::{build_mixtures, MixSources, SignalModel};
use mbrir::pipeline::{self, RenderOptions, WORKERS_ENV};
use mbrir::validate::{analyze, RirReport};
use mbrir::{BandSpec, FilterBank, Interp, RenderContext, Rir, RoomConfig, SimParams, Variant};

const EXIT_GATE: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Shoebox room impulse responses with multiband absorption and
/// directivity, plus validation and mixture tools.
///
/// Exit status: 0 on success, 1 when a validation gate or a record fails,
/// 2 on usage errors.
#[derive(Parser, Debug)]
#[command(name = "mbrir", version)]
struct Cli {
    /// Master seed; every output is a function of this and the inputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding generator defaults (bands, gamma, t60_bounds_s,
    /// speed_of_sound, sabine_constant, min_distance_m, image_budget).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample room configurations into a JSONL file.
    SampleRooms(SampleRoomsArgs),
    /// Render configurations to WAV files and a manifest.
    Render(RenderArgs),
    /// Measure onset and decay times of existing impulse responses.
    Validate(ValidateArgs),
    /// Build clean/degraded speech pairs.
    Mix(MixArgs),
    /// Fit per-band Gamma distributions to measured T60 values.
    FitGamma(FitGammaArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Sb,
    Mb,
    RecMb,
    SrcRecMb,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Sb => Variant::Sb,
            VariantArg::Mb => Variant::Mb,
            VariantArg::RecMb => Variant::RecMb,
            VariantArg::SrcRecMb => Variant::SrcRecMb,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InterpArg {
    Sinc,
    Nearest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    /// x = (y * h) + n
    A,
    /// x = (y + n) * h
    B,
}

#[derive(Args, Debug)]
struct SampleRoomsArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, value_enum, default_value = "mb")]
    variant: VariantArg,
    /// Output JSONL file, one RoomConfig per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// JSONL file of RoomConfigs (as written by sample-rooms).
    #[arg(long)]
    configs: PathBuf,
    /// Render as these variants instead of each config's own; repeatable.
    #[arg(long, value_enum)]
    variant: Vec<VariantArg>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Source directivity table (az_deg, el_deg, gain[, per-band gains]).
    #[arg(long)]
    src_table: Option<PathBuf>,
    /// Receiver filter index CSV (az_deg, el_deg, path), or a directory
    /// containing index.csv.
    #[arg(long)]
    rec_filters: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sinc")]
    interp: InterpArg,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Impulse response files or directories of WAV/FLAC files.
    #[arg(long, required = true, num_args = 1..)]
    rir: Vec<PathBuf>,
    /// Measure only this band (1-based).
    #[arg(long)]
    band: Option<usize>,
    /// Output JSONL report, one line per file.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct MixArgs {
    #[arg(long)]
    speech_dir: PathBuf,
    #[arg(long)]
    noise_dir: PathBuf,
    #[arg(long)]
    rir_dir: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, value_enum, default_value = "a")]
    model: ModelArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitGammaArgs {
    /// CSV with two columns: band (center Hz or 1-based index) and T60 seconds.
    #[arg(long = "in")]
    input: PathBuf,
}

/// Failure that should map to the usage exit status.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_params(path: Option<&Path>) -> Result<SimParams> {
    match path {
        Some(p) => SimParams::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(SimParams::default()),
    }
}

fn sample_rooms(cli: &Cli, args: &SampleRoomsArgs) -> Result<u8> {
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let ctx = RenderContext::new(&load_params(cli.config.as_deref())?)?;
    let configs = pipeline::sample_configs(args.count, cli.seed, args.variant.into(), &ctx)?;
    pipeline::write_jsonl(&args.out, &configs).with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {} configs to {}", configs.len(), args.out.display());
    Ok(0)
}

fn render(cli: &Cli, args: &RenderArgs) -> Result<u8> {
    let params = load_params(cli.config.as_deref())?;
    let mut ctx = RenderContext::new(&params)?.with_interp(match args.interp {
        InterpArg::Sinc => Interp::Sinc,
        InterpArg::Nearest => Interp::Nearest,
    });
    if let Some(p) = &args.src_table {
        ctx = ctx.with_source_table(DirectivityTable::load(p).with_context(|| format!("loading {}", p.display()))?);
    }
    if let Some(p) = &args.rec_filters {
        let index = if p.is_dir() { p.join("index.csv") } else { p.clone() };
        let set = ReceiverFilterSet::load(&index, params.sample_rate()).with_context(|| format!("loading {}", index.display()))?;
        ctx = ctx.with_receiver_filters(set)?;
    }
    let configs: Vec<RoomConfig> =
        pipeline::read_jsonl(&args.configs).with_context(|| format!("reading {}", args.configs.display()))?;
    if configs.is_empty() {
        return Err(usage(format!("{} holds no configs", args.configs.display())));
    }
    for c in &configs {
        c.validate().with_context(|| format!("config {}", c.id))?;
    }
    let jobs = if args.variant.is_empty() {
        configs
    } else {
        let variants: Vec<Variant> = args.variant.iter().map(|&v| v.into()).collect();
        pipeline::shared_geometry_export(&configs, &variants)
    };
    let workers = match args.workers {
        Some(0) => return Err(usage("--workers must be at least 1")),
        Some(n) => n,
        None => pipeline::default_workers(),
    };
    let manifest = pipeline::render_configs(&jobs, &ctx, &args.out, &RenderOptions::new(workers, cli.seed))?;
    let failed: Vec<&str> = manifest.failed().map(|r| r.config.id.as_str()).collect();
    log::info!(
        "rendered {} of {} jobs into {}",
        manifest.records.len() - failed.len(),
        manifest.records.len(),
        args.out.display()
    );
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("{} record(s) failed validation gates: {}", failed.len(), failed.join(", "));
        Ok(EXIT_GATE)
    }
}

fn collect_audio(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(mbrir::mixture::list_audio_files(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn validate(args: &ValidateArgs) -> Result<u8> {
    let files = collect_audio(&args.rir)?;
    if files.is_empty() {
        return Err(usage("no impulse response files given"));
    }
    let mut banks: BTreeMap<u32, FilterBank> = BTreeMap::new();
    let mut reports: Vec<RirReport> = Vec::new();
    for f in &files {
        let a = audio::read_audio(f)?;
        let fs = a.sample_rate_hz;
        if !banks.contains_key(&fs) {
            let bank = FilterBank::new(&BandSpec::with_sample_rate(fs)).map_err(|e| usage(format!("{}: {e}", f.display())))?;
            banks.insert(fs, bank);
        }
        let bank = &banks[&fs];
        let bands = match args.band {
            Some(b) if b == 0 || b > bank.num_bands() => {
                return Err(usage(format!("--band must be in 1..={}", bank.num_bands())));
            }
            Some(b) => Some(vec![b - 1]),
            None => None,
        };
        let report = analyze(&Rir::new(fs, a.samples), bank, bands.as_deref(), &f.display().to_string());
        let t60s: Vec<String> = report
            .t60_bands_s
            .iter()
            .map(|t| t.map_or("-".into(), |t| format!("{t:.3}")))
            .collect();
        println!(
            "{}\t{}\tonset={}\tt60={}\tbands=[{}]",
            if report.passes() { "ok" } else { "FAIL" },
            report.path,
            report.onset_sample.map_or("-".into(), |o| o.to_string()),
            report.t60_broadband_s.map_or("-".into(), |t| format!("{t:.3}")),
            t60s.join(", ")
        );
        reports.push(report);
    }
    pipeline::write_jsonl(&args.report, &reports).with_context(|| format!("writing {}", args.report.display()))?;
    Ok(if reports.iter().all(RirReport::passes) { 0 } else { EXIT_GATE })
}

fn mix(cli: &Cli, args: &MixArgs) -> Result<u8> {
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let sources = MixSources::from_dirs(&args.speech_dir, &args.noise_dir, &args.rir_dir)?;
    let model = match args.model {
        ModelArg::A => SignalModel::ReverbSpeechPlusNoise,
        ModelArg::B => SignalModel::ReverbSum,
    };
    let records = build_mixtures(&sources, args.count, cli.seed, model, &args.out)?;
    let fallbacks = records.iter().filter(|r| r.chunk_fallback).count();
    if fallbacks > 0 {
        log::warn!("{fallbacks} chunk(s) found no window above the silence gate");
    }
    log::info!("wrote {} pairs to {}", records.len(), args.out.display());
    Ok(0)
}

fn parse_band(field: &str, spec: &BandSpec) -> Result<usize> {
    let v: f64 = field.parse().map_err(|_| usage(format!("bad band value {field:?}")))?;
    if let Some(b) = spec.band_index(v) {
        return Ok(b);
    }
    if v.fract() == 0.0 && v >= 1.0 && (v as usize) <= spec.num_bands() {
        return Ok(v as usize - 1);
    }
    Err(usage(format!("band {field:?} is neither a band center nor an index")))
}

fn fit_gamma_cmd(cli: &Cli, args: &FitGammaArgs) -> Result<u8> {
    let spec = load_params(cli.config.as_deref())?.bands;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let mut samples = vec![Vec::new(); spec.num_bands()];
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != 2 {
            bail!("{}: row {} has {} columns, expected 2", args.input.display(), i + 1, row.len());
        }
        let t60: f64 = match row[1].parse() {
            Ok(v) => v,
            // header row
            Err(_) if i == 0 => continue,
            Err(_) => bail!("{}: row {}: bad T60 {:?}", args.input.display(), i + 1, &row[1]),
        };
        samples[parse_band(&row[0], &spec)?].push(t60);
    }
    let mut failed = false;
    println!("band_hz,shape,scale,n");
    for (b, xs) in samples.iter().enumerate() {
        match fit_gamma(xs) {
            Ok(fit) => println!("{},{:.6},{:.6},{}", spec.centers_hz[b], fit.shape, fit.scale, xs.len()),
            Err(e) => {
                eprintln!("band {} Hz: {e}", spec.centers_hz[b]);
                failed = true;
            }
        }
    }
    Ok(if failed { EXIT_GATE } else { 0 })
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::SampleRooms(a) => sample_rooms(cli, a),
        Command::Render(a) => render(cli, a),
        Command::Validate(a) => validate(a),
        Command::Mix(a) => mix(cli, a),
        Command::FitGamma(a) => fit_gamma_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<mbrir::Error>(), Some(mbrir::Error::InvalidParameter(_)));
            ExitCode::from(if is_usage { EXIT_USAGE } else { EXIT_GATE })
        }
    }
}
