//! Linear convolution helpers.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Kernels at most this long are convolved directly, which keeps trivial
/// filters (a unit impulse, a short gain) exact.
pub const DIRECT_MAX_TAPS: usize = 64;

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (k, &hk) in h.iter().enumerate() {
        for (o, &xi) in out[k..].iter_mut().zip(x) {
            *o += xi * hk;
        }
    }
    out
}

/// Smallest `2^a 3^b 5^c` at or above `n`.
pub fn fast_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

pub fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = fast_len(out_len);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // Both real inputs share one complex transform: z = x + i h.
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for (v, &a) in z.iter_mut().zip(x) {
        v.re = a;
    }
    for (v, &b) in z.iter_mut().zip(h) {
        v.im = b;
    }
    fwd.process(&mut z);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = z[k];
        let zc = z[(n - k) % n].conj();
        let xk = (zk + zc) * 0.5;
        let hk = (zk - zc) * Complex64::new(0.0, -0.5);
        prod[k] = xk * hk;
    }
    inv.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Full linear convolution, direct for short kernels and FFT otherwise.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.len().min(h.len()) <= DIRECT_MAX_TAPS {
        if h.len() <= x.len() {
            convolve_direct(x, h)
        } else {
            convolve_direct(h, x)
        }
    } else {
        convolve_fft(x, h)
    }
}

pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fft_matches_direct() {
        let mut rng = crate::seed::rng(1);
        for (a, b) in [(1000, 300), (77, 1200), (5, 5), (4096, 4096)] {
            let x: Vec<f64> = (0..a).map(|_| rng.random::<f64>() - 0.5).collect();
            let h: Vec<f64> = (0..b).map(|_| rng.random::<f64>() - 0.5).collect();
            let d = convolve_direct(&x, &h);
            let f = convolve_fft(&x, &h);
            assert_eq!(d.len(), f.len());
            for (p, q) in d.iter().zip(&f) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_impulse_is_exact() {
        let x = vec![0.1, -0.3, 0.7];
        assert_eq!(convolve(&x, &[1.0]), x);
        assert_eq!(convolve(&[1.0], &x), x);
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(1001), 1024);
        assert_eq!(fast_len(1025), 1080);
        for n in [3, 17, 100_001, 262_145] {
            let m = fast_len(n);
            assert!(m >= n);
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            assert_eq!(r, 1);
        }
    }
}
