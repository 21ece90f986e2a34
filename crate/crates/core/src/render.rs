//! Variant renderers: single-band, multiband, and multiband with receiver
//! and/or source directivity.
//!
//! Multiband renders enumerate the images once and recompute amplitudes per
//! band from the wall hits, so all bands share delays and directions exactly.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::directivity::{weight_source, DirectivityTable, ReceiverFilterSet};
use crate::dsp;
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::geom::Orientation;
use crate::ism::{
    check_length, emission_directions, enumerate_images_within, max_order_for, reflection_gain, Interp, IsmParams,
    Kernel, Reflection, ReflectionList, Rir, WallAbsorption,
};
use crate::params::SimParams;
use crate::room::{physical_t60_s, sabine_absorption_with, RoomConfig, Variant};

/// Extra samples after the decay window so the last sinc kernel fits.
const KERNEL_MARGIN: usize = 41;

/// Everything a render needs besides the room itself. Cheap to clone.
#[derive(Debug, Clone)]
pub struct RenderContext {
    pub params: SimParams,
    pub ism: IsmParams,
    pub bank: Arc<FilterBank>,
    pub interp: Interp,
    pub source_table: Arc<DirectivityTable>,
    pub receiver_filters: Arc<ReceiverFilterSet>,
}

impl RenderContext {
    /// Defaults: sinc taps, bundled source pattern, synthetic-sphere receiver.
    pub fn new(params: &SimParams) -> Result<RenderContext> {
        params.validate()?;
        Ok(RenderContext {
            params: params.clone(),
            ism: IsmParams::from(params),
            bank: Arc::new(FilterBank::new(&params.bands)?),
            interp: Interp::Sinc,
            source_table: Arc::new(DirectivityTable::default_source()),
            receiver_filters: Arc::new(ReceiverFilterSet::synthetic_sphere(params.sample_rate())),
        })
    }

    pub fn with_source_table(mut self, table: DirectivityTable) -> Self {
        self.source_table = Arc::new(table);
        self
    }

    pub fn with_receiver_filters(mut self, filters: ReceiverFilterSet) -> Result<Self> {
        if filters.sample_rate_hz != self.params.sample_rate() {
            return Err(Error::InvalidDirectivity(format!(
                "receiver filters at {} Hz, render at {} Hz",
                filters.sample_rate_hz,
                self.params.sample_rate()
            )));
        }
        self.receiver_filters = Arc::new(filters);
        Ok(self)
    }

    pub fn with_interp(mut self, interp: Interp) -> Self {
        self.interp = interp;
        self
    }

    pub fn sample_rate(&self) -> u32 {
        self.params.sample_rate()
    }

    fn absorption(&self, config: &RoomConfig, t60_s: f64) -> Result<WallAbsorption> {
        WallAbsorption::uniform(sabine_absorption_with(config.dims_m, t60_s, self.params.sabine_constant).coefficient)
    }
}

/// Buffer length for a decay of `t60_s`: the decay itself, the direct-path
/// delay in front of it, and room for the last kernel.
pub fn render_length(config: &RoomConfig, t60_s: f64, sample_rate_hz: u32, speed_of_sound: f64) -> usize {
    let fs = f64::from(sample_rate_hz);
    let direct = config.source_distance_m() / speed_of_sound;
    (t60_s * fs).ceil() as usize + (direct * fs).ceil() as usize + KERNEL_MARGIN
}

/// Images whose delay falls inside a buffer of `length` samples.
fn enumerate_window(config: &RoomConfig, absorption: &WallAbsorption, length: usize, ctx: &RenderContext) -> Result<ReflectionList> {
    let window_s = (length - 1) as f64 / f64::from(ctx.sample_rate());
    let order = max_order_for(config, window_s, ctx.ism.speed_of_sound);
    enumerate_images_within(config, absorption, order, &ctx.ism, ctx.ism.speed_of_sound * window_s)
}

/// Deposit every reflection into `n_bands` buffers; `amp(r, b)` gives its
/// amplitude in band `b`. The kernel is shared across bands.
pub(crate) fn deposit_bands(
    list: &ReflectionList,
    n_bands: usize,
    amp: impl Fn(&Reflection, usize) -> f64,
    length: usize,
    sample_rate_hz: u32,
    interp: Interp,
) -> Vec<Vec<f64>> {
    let fs = f64::from(sample_rate_hz);
    let mut bufs = vec![vec![0.0; length]; n_bands];
    for r in &list.reflections {
        let k = Kernel::new(r.delay_s * fs, interp);
        for (b, buf) in bufs.iter_mut().enumerate() {
            k.add_to(buf, amp(r, b));
        }
    }
    bufs
}

/// Like [`deposit_bands`], but each reflection is also filtered by the
/// receiver response nearest its arrival direction. Buffers come back
/// `length + filter_len - 1` long.
#[allow(clippy::too_many_arguments)]
pub(crate) fn deposit_bands_receiver(
    list: &ReflectionList,
    n_bands: usize,
    amp: impl Fn(&Reflection, usize) -> f64,
    filters: &ReceiverFilterSet,
    orientation: Orientation,
    length: usize,
    sample_rate_hz: u32,
    interp: Interp,
) -> Vec<Vec<f64>> {
    // Identical filters share one bucket.
    let mut canonical: Vec<usize> = Vec::with_capacity(filters.impulse_responses.len());
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, h) in filters.impulse_responses.iter().enumerate() {
        let key: Vec<u64> = h.iter().map(|v| v.to_bits()).collect();
        canonical.push(*seen.entry(key).or_insert(i));
    }
    let assign: Vec<usize> = list
        .reflections
        .iter()
        .map(|r| canonical[filters.nearest(orientation.to_local(r.arrival_dir))])
        .collect();
    let out_len = length + filters.filter_len() - 1;

    let mut used: Vec<usize> = assign.clone();
    used.sort_unstable();
    used.dedup();
    if used.len() <= 1 {
        let h = &filters.impulse_responses[used.first().copied().unwrap_or(0)];
        return deposit_bands(list, n_bands, amp, length, sample_rate_hz, interp)
            .iter()
            .map(|b| {
                let mut y = dsp::convolve_direct(b, h);
                y.resize(out_len, 0.0);
                y
            })
            .collect();
    }

    // Two bands ride in one complex transform (real and imaginary parts);
    // the filters are real, so the parts never mix.
    let fs = f64::from(sample_rate_hz);
    let n = dsp::fast_len(out_len);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pairs = n_bands.div_ceil(2);
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = vec![vec![zero; n]; pairs];
    let mut re = vec![0.0; length];
    let mut im = vec![0.0; length];
    let mut z = vec![zero; n];
    let mut hz = vec![zero; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); filters.impulse_responses.len()];
    for (i, &d) in assign.iter().enumerate() {
        members[d].push(i);
    }

    for &d in &used {
        hz.fill(zero);
        for (v, &h) in hz.iter_mut().zip(&filters.impulse_responses[d]) {
            v.re = h;
        }
        fwd.process(&mut hz);
        for (p, acc_p) in acc.iter_mut().enumerate() {
            let b0 = 2 * p;
            let b1 = b0 + 1;
            re.fill(0.0);
            im.fill(0.0);
            for &i in &members[d] {
                let r = &list.reflections[i];
                let k = Kernel::new(r.delay_s * fs, interp);
                k.add_to(&mut re, amp(r, b0));
                if b1 < n_bands {
                    k.add_to(&mut im, amp(r, b1));
                }
            }
            z.fill(zero);
            for (k, v) in z.iter_mut().take(length).enumerate() {
                *v = Complex64::new(re[k], im[k]);
            }
            fwd.process(&mut z);
            for ((a, x), h) in acc_p.iter_mut().zip(&z).zip(&hz) {
                *a += x * h;
            }
        }
    }

    let scale = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n_bands);
    for (p, mut a) in acc.into_iter().enumerate() {
        inv.process(&mut a);
        out.push(a[..out_len].iter().map(|c| c.re * scale).collect());
        if 2 * p + 1 < n_bands {
            out.push(a[..out_len].iter().map(|c| c.im * scale).collect());
        }
    }
    out
}

/// Single-band render at the scalar T60; no filterbank.
pub fn render_sb(config: &RoomConfig, ctx: &RenderContext) -> Result<Rir> {
    let fs = ctx.sample_rate();
    let t60 = config.t60_scalar_s;
    let decay = physical_t60_s(config.dims_m, t60, ctx.params.sabine_constant);
    let length = render_length(config, decay, fs, ctx.ism.speed_of_sound);
    let list = enumerate_window(config, &ctx.absorption(config, t60)?, length, ctx)?;
    let rir = crate::ism::synthesize(&list, length, fs, ctx.interp)?;
    Ok(rir.with_meta(Variant::Sb, &config.id))
}

/// Per-band wall reflection factors from the Sabine absorption of each band.
fn band_betas(config: &RoomConfig, ctx: &RenderContext) -> Result<Vec<[f64; 6]>> {
    if config.t60_bands_s.len() != ctx.bank.num_bands() {
        return Err(Error::InvalidParameter(format!(
            "config has {} band T60s, filterbank has {} bands",
            config.t60_bands_s.len(),
            ctx.bank.num_bands()
        )));
    }
    config
        .t60_bands_s
        .iter()
        .map(|&t| Ok(ctx.absorption(config, t)?.reflection_factors()))
        .collect()
}

/// Multiband render with optional directivity, per `variant`.
fn render_multiband(config: &RoomConfig, ctx: &RenderContext, variant: Variant) -> Result<Rir> {
    let fs = ctx.sample_rate();
    let betas = band_betas(config, ctx)?;
    let decay = config
        .t60_bands_s
        .iter()
        .map(|&t| physical_t60_s(config.dims_m, t, ctx.params.sabine_constant))
        .fold(0.0, f64::max);
    let length = render_length(config, decay, fs, ctx.ism.speed_of_sound);
    // Geometry only; per-band amplitudes are recomputed below.
    let mut list = enumerate_window(config, &ctx.absorption(config, config.t60_bands_s[0])?, length, ctx)?;
    check_length(&list, length, fs)?;
    if variant.has_source_directivity() {
        list = emission_directions(config, list, &ctx.ism)?;
        list = weight_source(list, &ctx.source_table)?;
    }
    let d_min = ctx.ism.min_distance_m;
    let amp = |r: &Reflection, b: usize| reflection_gain(&betas[b], &r.wall_hits, r.distance_m, d_min) * r.band_gain(b);
    let bands = if variant.has_receiver_directivity() {
        deposit_bands_receiver(
            &list,
            betas.len(),
            amp,
            &ctx.receiver_filters,
            config.receiver_orientation(),
            length,
            fs,
            ctx.interp,
        )
    } else {
        deposit_bands(&list, betas.len(), amp, length, fs, ctx.interp)
    };
    let samples = ctx.bank.apply(&bands)?;
    Ok(Rir::new(fs, samples).with_meta(variant, &config.id))
}

/// Multiband render without directivity.
pub fn render_mb(config: &RoomConfig, ctx: &RenderContext) -> Result<Rir> {
    render_multiband(config, ctx, Variant::Mb)
}

/// Render `config` as its own variant.
pub fn render(config: &RoomConfig, ctx: &RenderContext) -> Result<Rir> {
    render_variant(config, config.variant, ctx)
}

pub fn render_variant(config: &RoomConfig, variant: Variant, ctx: &RenderContext) -> Result<Rir> {
    match variant {
        Variant::Sb => render_sb(config, ctx),
        v => render_multiband(config, ctx, v),
    }
}

/// Warnings a render of `config` would raise (absorption clamps, T60 clamps).
pub fn render_warnings(config: &RoomConfig, variant: Variant, params: &SimParams) -> Vec<String> {
    let mut out = Vec::new();
    if config.t60_clamped {
        out.push("t60 draw clamped after resampling limit".to_string());
    }
    let t60s: Vec<(String, f64)> = if variant == Variant::Sb {
        vec![("scalar".into(), config.t60_scalar_s)]
    } else {
        config
            .t60_bands_s
            .iter()
            .zip(&params.bands.centers_hz)
            .map(|(t, f)| (format!("{f} Hz"), *t))
            .collect()
    };
    for (name, t) in t60s {
        if sabine_absorption_with(config.dims_m, t, params.sabine_constant).clamped {
            out.push(format!("absorption clamped to 0.99 for {name} (T60 {t:.3} s)"));
        }
    }
    out
}
