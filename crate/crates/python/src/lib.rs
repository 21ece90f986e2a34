//! Python bindings. Signals cross the boundary as plain lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mbrir::directivity::{DirectivityTable, ReceiverFilterSet};
use mbrir::mixture::SignalModel;
use mbrir::pipeline::{self, RenderOptions};
use mbrir::{BandSpec, FilterBank, Interp, RenderContext, Rir, SimParams, Variant, Vec3};

fn err(e: mbrir::Error) -> PyErr {
    match e {
        mbrir::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (mbrir::Error::Audio { .. } | mbrir::Error::OutDirUnwritable { .. }) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(err)
}

fn params(config: Option<PathBuf>) -> PyResult<SimParams> {
    config.map_or_else(|| Ok(SimParams::default()), |p| SimParams::load(&p).map_err(err))
}

fn triple(v: Vec3) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

/// A sampled room: geometry, placement, orientation and target T60s.
#[pyclass(name = "RoomConfig", module = "mbrir", from_py_object)]
#[derive(Clone)]
struct PyRoomConfig {
    inner: mbrir::RoomConfig,
}

#[pymethods]
impl PyRoomConfig {
    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn dims_m(&self) -> (f64, f64, f64) {
        triple(self.inner.dims_m)
    }
    #[getter]
    fn rec_pos_m(&self) -> (f64, f64, f64) {
        triple(self.inner.rec_pos_m)
    }
    #[getter]
    fn src_pos_m(&self) -> (f64, f64, f64) {
        triple(self.inner.src_pos_m)
    }
    #[getter]
    fn rec_yaw_deg(&self) -> f64 {
        self.inner.rec_yaw_deg
    }
    #[getter]
    fn rec_pitch_deg(&self) -> f64 {
        self.inner.rec_pitch_deg
    }
    #[getter]
    fn t60_bands_s(&self) -> Vec<f64> {
        self.inner.t60_bands_s.clone()
    }
    #[getter]
    fn t60_scalar_s(&self) -> f64 {
        self.inner.t60_scalar_s
    }
    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.cli_name()
    }

    fn with_variant(&self, name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_variant(variant(name)?),
        })
    }

    /// Same room with source and receiver exchanged.
    fn swapped(&self) -> Self {
        Self {
            inner: self.inner.swapped(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: mbrir::RoomConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims_m;
        format!(
            "RoomConfig(id={:?}, dims=({:.2}, {:.2}, {:.2}), t60={:.3}, variant={})",
            self.inner.id, d.x, d.y, d.z, self.inner.t60_scalar_s, self.inner.variant
        )
    }
}

/// Renders rooms under one set of generator settings and directivity data.
#[pyclass(name = "Renderer", module = "mbrir")]
struct PyRenderer {
    ctx: RenderContext,
}

#[pymethods]
impl PyRenderer {
    #[new]
    #[pyo3(signature = (config=None, interp="sinc", src_table=None, rec_filters=None))]
    fn new(config: Option<PathBuf>, interp: &str, src_table: Option<PathBuf>, rec_filters: Option<PathBuf>) -> PyResult<Self> {
        let params = params(config)?;
        let interp = match interp {
            "sinc" => Interp::Sinc,
            "nearest" => Interp::Nearest,
            other => return Err(PyValueError::new_err(format!("unknown interpolation {other:?}"))),
        };
        let mut ctx = RenderContext::new(&params).map_err(err)?.with_interp(interp);
        if let Some(p) = src_table {
            ctx = ctx.with_source_table(DirectivityTable::load(&p).map_err(err)?);
        }
        if let Some(p) = rec_filters {
            let set = ReceiverFilterSet::load(&p, params.sample_rate()).map_err(err)?;
            ctx = ctx.with_receiver_filters(set).map_err(err)?;
        }
        Ok(Self { ctx })
    }

    /// Renderer whose directivity data is the identity (all-ones source
    /// table, unit-impulse receiver filters).
    #[staticmethod]
    fn identity() -> PyResult<Self> {
        let params = SimParams::default();
        let ctx = RenderContext::new(&params)
            .map_err(err)?
            .with_source_table(DirectivityTable::omni())
            .with_receiver_filters(ReceiverFilterSet::identity(params.sample_rate()))
            .map_err(err)?;
        Ok(Self { ctx })
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.ctx.sample_rate()
    }

    /// Render `room` as `variant` (its own variant when omitted).
    #[pyo3(signature = (room, variant_name=None))]
    fn render(&self, py: Python<'_>, room: PyRoomConfig, variant_name: Option<&str>) -> PyResult<Vec<f64>> {
        let v = variant_name.map(variant).transpose()?.unwrap_or(room.inner.variant);
        let ctx = &self.ctx;
        py.detach(|| mbrir::render::render_variant(&room.inner, v, ctx))
            .map(|r| r.samples)
            .map_err(err)
    }

    /// Sample `count` rooms from `seed`, render them with `workers` threads
    /// into `out_dir`, and return the number of records failing the gates.
    #[pyo3(signature = (count, seed, out_dir, variant_name="mb", workers=1))]
    fn generate(&self, py: Python<'_>, count: usize, seed: u64, out_dir: PathBuf, variant_name: &str, workers: usize) -> PyResult<usize> {
        let v = variant(variant_name)?;
        let ctx = &self.ctx;
        let manifest = py
            .detach(|| pipeline::generate(count, seed, v, ctx, &out_dir, &RenderOptions::new(workers, seed)))
            .map_err(err)?;
        Ok(manifest.failed().count())
    }
}

#[pyfunction]
#[pyo3(signature = (seed, variant_name="mb", config=None))]
fn sample_room(seed: u64, variant_name: &str, config: Option<PathBuf>) -> PyResult<PyRoomConfig> {
    let inner = mbrir::room::sample_room(seed, variant(variant_name)?, &params(config)?).map_err(err)?;
    Ok(PyRoomConfig { inner })
}

/// Uniform Sabine absorption coefficient (clamped to 0.99).
#[pyfunction]
fn sabine_absorption(dims_m: (f64, f64, f64), t60_s: f64) -> f64 {
    mbrir::room::sabine_absorption(Vec3::new(dims_m.0, dims_m.1, dims_m.2), t60_s).coefficient
}

/// Maximum-likelihood (shape, scale).
#[pyfunction]
fn fit_gamma(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    let f = mbrir::gamma_fit::fit_gamma(&samples).map_err(err)?;
    Ok((f.shape, f.scale))
}

/// Schroeder T60 of the broadband signal, or of one 0-based octave band.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate_hz=48_000, band=None))]
fn schroeder_t60(samples: Vec<f64>, sample_rate_hz: u32, band: Option<usize>) -> PyResult<f64> {
    let bank = FilterBank::new(&BandSpec::with_sample_rate(sample_rate_hz)).map_err(err)?;
    if band.is_some_and(|b| b >= bank.num_bands()) {
        return Err(PyValueError::new_err("band index out of range"));
    }
    let rir = Rir::new(sample_rate_hz, samples);
    mbrir::validate::schroeder_t60_band(&rir, band, &bank, mbrir::validate::DEFAULT_FIT_RANGE_DB)
        .map(|f| f.t60_s)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (samples, sample_rate_hz=48_000))]
fn detect_onset(samples: Vec<f64>, sample_rate_hz: u32) -> PyResult<usize> {
    mbrir::validate::detect_onset_default(&samples, sample_rate_hz).map_err(err)
}

/// Degraded/reference pair; `model` is "a" (reverberant speech plus noise)
/// or "b" (reverberated sum).
#[pyfunction]
#[pyo3(signature = (y, n, h, snr_db, model="a"))]
fn make_mixture(y: Vec<f64>, n: Vec<f64>, h: Vec<f64>, snr_db: f64, model: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let model: SignalModel = model.parse().map_err(err)?;
    let m = mbrir::mixture::make_mixture(&y, &n, &h, snr_db, model).map_err(err)?;
    Ok((m.x, m.y))
}

#[pyfunction]
fn si_sdr(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    mbrir::mixture::si_sdr(&reference, &estimate).map_err(err)
}

#[pyfunction]
fn log_spectral_distance(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    mbrir::mixture::log_spectral_distance(&reference, &estimate).map_err(err)
}

/// (sample_rate_hz, first-channel samples).
#[pyfunction]
fn read_audio(path: PathBuf) -> PyResult<(u32, Vec<f64>)> {
    let a = mbrir::audio::read_audio(&path).map_err(err)?;
    Ok((a.sample_rate_hz, a.samples))
}

#[pyfunction]
#[pyo3(signature = (path, samples, sample_rate_hz=48_000))]
fn write_wav(path: PathBuf, samples: Vec<f64>, sample_rate_hz: u32) -> PyResult<()> {
    mbrir::audio::write_wav_f32(&path, &samples, sample_rate_hz).map_err(err)
}

#[pymodule(name = "mbrir")]
fn mbrir_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoomConfig>()?;
    m.add_class::<PyRenderer>()?;
    m.add_function(wrap_pyfunction!(sample_room, m)?)?;
    m.add_function(wrap_pyfunction!(sabine_absorption, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(schroeder_t60, m)?)?;
    m.add_function(wrap_pyfunction!(detect_onset, m)?)?;
    m.add_function(wrap_pyfunction!(make_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(si_sdr, m)?)?;
    m.add_function(wrap_pyfunction!(log_spectral_distance, m)?)?;
    m.add_function(wrap_pyfunction!(read_audio, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    Ok(())
}
