//! Maximum-likelihood Gamma fitting (shape/scale parameterization).
//!
//! The scale has a closed-form optimum `mean / shape` for any shape, so the
//! fit reduces to a 1-D Newton solve of `ln(k) - digamma(k) = ln(mean) - mean(ln x)`.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 30;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    /// Mean negative log-likelihood per sample at the returned point.
    pub nll: f64,
    /// Mean negative log-likelihood at the moment-matching start.
    pub initial_nll: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Mean negative log-likelihood of `Gamma(shape, scale)` given the sufficient
/// statistics `mean` and `mean_log` of the sample.
pub fn mean_nll(shape: f64, scale: f64, mean: f64, mean_log: f64) -> f64 {
    ln_gamma(shape) + shape * scale.ln() - (shape - 1.0) * mean_log + mean / scale
}

/// Gradient of [`mean_nll`] with respect to `(shape, scale)`.
fn nll_gradient(shape: f64, scale: f64, mean: f64, mean_log: f64) -> [f64; 2] {
    [
        digamma(shape) + scale.ln() - mean_log,
        shape / scale - mean / (scale * scale),
    ]
}

/// Second derivative of `ln Γ`. Recurrence up to x >= 20, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + inv2 / 2.0
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

pub fn fit_gamma(samples: &[f64]) -> Result<GammaFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::DegenerateData(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::DegenerateData("samples must be finite and positive".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_log = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    // ln(mean) - mean(ln x) >= 0 by Jensen, with equality only for constant data.
    let s = mean.ln() - mean_log;
    if var <= 0.0 || s <= 0.0 {
        return Err(Error::DegenerateData("samples are constant".into()));
    }

    let init_shape = mean * mean / var;
    let init_scale = var / mean;
    let initial_nll = mean_nll(init_shape, init_scale, mean, mean_log);

    let mut shape = init_shape;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        let scale = mean / shape;
        let g = nll_gradient(shape, scale, mean, mean_log);
        gradient_norm = g[0].hypot(g[1]);
        if gradient_norm < GRADIENT_TOLERANCE {
            break;
        }
        // Root of f(k) = ln k - digamma(k) - s; f is decreasing and convex.
        let f = shape.ln() - digamma(shape) - s;
        let df = 1.0 / shape - trigamma(shape);
        let mut next = shape - f / df;
        if !(next > 0.0) || !next.is_finite() {
            next = shape / 2.0;
        }
        shape = next;
        iterations += 1;
    }
    let scale = mean / shape;
    let mut fit = GammaFit {
        shape,
        scale,
        nll: mean_nll(shape, scale, mean, mean_log),
        initial_nll,
        iterations,
        gradient_norm,
    };
    if fit.nll > initial_nll {
        // Never hand back something worse than the starting point.
        fit.shape = init_shape;
        fit.scale = init_scale;
        fit.nll = initial_nll;
    }
    Ok(fit)
}
