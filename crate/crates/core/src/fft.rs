//! Thin wrappers around `rustfft` for real-valued periodic data.
//!
//! Spectra are stored in FFT order: index `j < n/2` holds mode `j`, index
//! `j >= n/2` holds mode `j - n`. The forward transform is unnormalised and the
//! inverse carries the `1/n` factor, so `inverse(forward(f)) == f`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

pub(crate) fn forward(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan_forward(buf.len()).process(&mut buf);
    buf
}

pub(crate) fn inverse(spectrum: &[Complex64]) -> Vec<f64> {
    let mut buf = spectrum.to_vec();
    inverse_in_place(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

pub(crate) fn inverse_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    plan_inverse(n).process(buf);
    let scale = 1.0 / n as f64;
    for c in buf.iter_mut() {
        *c *= scale;
    }
}

/// Signed mode number of FFT index `j` for a transform of length `n`.
#[inline]
pub(crate) fn mode(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Zero-pads a length-`n` spectrum to length `m > n`, preserving sample values
/// under the normalisation above. The Nyquist coefficient is split evenly
/// between `+n/2` and `-n/2`.
pub(crate) fn pad(spectrum: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = spectrum.len();
    debug_assert!(m >= n && n % 2 == 0);
    let scale = m as f64 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    if m == n {
        return spectrum.to_vec();
    }
    let half = n / 2;
    for j in 0..half {
        out[j] = spectrum[j] * scale;
    }
    for j in half + 1..n {
        out[m - (n - j)] = spectrum[j] * scale;
    }
    let nyq = spectrum[half] * (0.5 * scale);
    out[half] = nyq;
    out[m - half] = nyq;
    out
}

/// Inverse of [`pad`]: keeps the modes representable on `n` points and folds
/// the two half-Nyquist coefficients back together.
pub(crate) fn truncate(spectrum: &[Complex64], n: usize) -> Vec<Complex64> {
    let m = spectrum.len();
    debug_assert!(m >= n && n % 2 == 0);
    if m == n {
        return spectrum.to_vec();
    }
    let scale = n as f64 / m as f64;
    let half = n / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..half {
        out[j] = spectrum[j] * scale;
    }
    for j in half + 1..n {
        out[j] = spectrum[m - (n - j)] * scale;
    }
    out[half] = (spectrum[half] + spectrum[m - half]) * scale;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_then_truncate_is_identity() {
        let samples: Vec<f64> = (0..16).map(|j| ((j * 7) % 5) as f64 - 1.3).collect();
        let spec = forward(&samples);
        let back = inverse(&truncate(&pad(&spec, 40), 16));
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn padding_interpolates_a_single_mode() {
        let n = 16;
        let samples: Vec<f64> = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * 3.0 * j as f64 / n as f64).cos())
            .collect();
        let fine = inverse(&pad(&forward(&samples), 4 * n));
        for (j, v) in fine.iter().enumerate() {
            let x = 2.0 * std::f64::consts::PI * 3.0 * j as f64 / (4 * n) as f64;
            assert!((v - x.cos()).abs() < 1e-13);
        }
    }
}
