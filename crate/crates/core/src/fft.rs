//! Thin wrappers over `rustfft` with a per-thread planner cache.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT, in place.
pub(crate) fn forward(buf: &mut [Complex64]) {
    if buf.len() < 2 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// Inverse DFT scaled by 1/N, in place.
pub(crate) fn inverse(buf: &mut [Complex64]) {
    if buf.len() < 2 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Frequency in Hz of DFT bin `k` for an `n`-point transform at rate `fs`.
/// Bins at and above n/2 map to negative frequencies.
#[inline]
pub(crate) fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    let signed = if 2 * k >= n {
        k as f64 - n as f64
    } else {
        k as f64
    };
    signed * fs / n as f64
}

#[inline]
pub(crate) fn bin_omega(k: usize, n: usize, fs: f64) -> f64 {
    2.0 * PI * bin_frequency(k, n, fs)
}
