//! Closed-form channel responses, notch search, symbol-spaced zero maps,
//! tone-probe measurement and link quality metrics.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::equalizer::payload_range;
use crate::error::{Error, Result};
use crate::fft;
use crate::fiber::FiberConfig;
use crate::optical::DtOdfeConfig;
use crate::signal::{ChannelResponse, ComplexWaveform, RealWaveform};
use crate::tx::{small_signal_source, SymbolFrame};

/// Pre-FEC BER threshold of the 7% overhead hard-decision code.
pub const FEC_BER_LIMIT: f64 = 3.8e-3;

/// Ceiling applied to SNR estimates of error-free outputs.
pub const SNR_CAP_DB: f64 = 60.0;

/// Default depth below the response median that qualifies a minimum as a notch.
pub const DEFAULT_NOTCH_FLOOR_DB: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub snr_db: f64,
    pub ber: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub fec_pass: bool,
}

impl MetricReport {
    pub fn from_counts(snr_db: f64, n_errors: u64, n_bits: u64) -> Self {
        let ber = if n_bits == 0 {
            0.0
        } else {
            n_errors as f64 / n_bits as f64
        };
        Self {
            snr_db,
            ber,
            n_bits,
            n_errors,
            fec_pass: ber <= FEC_BER_LIMIT,
        }
    }
}

fn phase_grid(freqs: &[f64], fiber: &FiberConfig) -> Vec<f64> {
    freqs
        .iter()
        .map(|&f| fiber.phase(2.0 * PI * f))
        .collect()
}

fn delay(omega: f64, tau: f64) -> Complex64 {
    Complex64::from_polar(1.0, -omega * tau)
}

/// Small-signal response of the dual-tap link, summed term by term.
pub fn analytic_response(
    freqs: &[f64],
    fiber: &FiberConfig,
    cfg: &DtOdfeConfig,
) -> Result<ChannelResponse> {
    let (t1, t2, phi) = (cfg.tau1, cfg.tau2, cfg.phi);
    let values = freqs
        .iter()
        .zip(phase_grid(freqs, fiber))
        .map(|(&f, theta)| {
            let w = 2.0 * PI * f;
            let c = theta.cos();
            let e1 = delay(w, t1);
            let e2 = delay(w, t2);
            let e12 = delay(w, t1 + t2);
            Complex64::from(c)
                + e1 * c
                + (theta + phi + FRAC_PI_2).cos()
                + e1 * (theta - phi - FRAC_PI_2).cos()
                + e2 * c
                + e12 * c
                + e2 * (theta + phi - FRAC_PI_2).cos()
                + e12 * (theta - phi + FRAC_PI_2).cos()
        })
        .collect();
    ChannelResponse::new(freqs.to_vec(), values)
}

fn four_tap(
    freqs: &[f64],
    fiber: &FiberConfig,
    tau1: f64,
    tau2: f64,
    weights: impl Fn(f64, f64) -> [f64; 4],
) -> Result<ChannelResponse> {
    let values = freqs
        .iter()
        .zip(phase_grid(freqs, fiber))
        .map(|(&f, theta)| {
            let w = 2.0 * PI * f;
            let [a, b, c, d] = weights(theta.cos(), theta.sin());
            Complex64::from(a) + delay(w, tau1) * b + delay(w, tau2) * c + delay(w, tau1 + tau2) * d
        })
        .collect();
    ChannelResponse::new(freqs.to_vec(), values)
}

/// Real-weight form of [`analytic_response`] at phi = +-pi.
pub fn pi_phase_response(
    freqs: &[f64],
    fiber: &FiberConfig,
    tau1: f64,
    tau2: f64,
) -> Result<ChannelResponse> {
    four_tap(freqs, fiber, tau1, tau2, |c, s| [c + s, c - s, c - s, c + s])
}

/// Real-weight form of [`analytic_response`] at phi = 0.
pub fn zero_phase_response(
    freqs: &[f64],
    fiber: &FiberConfig,
    tau1: f64,
    tau2: f64,
) -> Result<ChannelResponse> {
    four_tap(freqs, fiber, tau1, tau2, |c, s| [c - s, c + s, c + s, c - s])
}

/// Power-fading response cos(theta) of an unequalized link.
pub fn baseline_response(freqs: &[f64], fiber: &FiberConfig) -> Result<ChannelResponse> {
    let values = phase_grid(freqs, fiber)
        .into_iter()
        .map(|t| Complex64::from(t.cos()))
        .collect();
    ChannelResponse::new(freqs.to_vec(), values)
}

/// Uniform grid from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Local minima of |H| lying more than `floor_db` below the median level,
/// refined by a parabola through the neighbouring magnitudes.
pub fn find_notches(h: &ChannelResponse, floor_db: f64) -> Vec<f64> {
    let mag = h.magnitude();
    if mag.len() < 3 {
        return Vec::new();
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    let db: Vec<f64> = mag
        .iter()
        .map(|m| 20.0 * (m / peak).max(1e-15).log10())
        .collect();
    let mut sorted = db.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let f = h.freqs();
    let mut out = Vec::new();
    for i in 1..mag.len() - 1 {
        if !(mag[i] < mag[i - 1] && mag[i] <= mag[i + 1]) || db[i] > median - floor_db {
            continue;
        }
        let (a, b, c) = (mag[i - 1], mag[i], mag[i + 1]);
        let denom = a - 2.0 * b + c;
        let offset = if denom > 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let step = if offset >= 0.0 {
            f[i + 1] - f[i]
        } else {
            f[i] - f[i - 1]
        };
        out.push(f[i] + offset * step);
    }
    out
}

/// First notch at a strictly positive frequency.
pub fn first_positive_notch(h: &ChannelResponse, floor_db: f64) -> Option<f64> {
    find_notches(h, floor_db).into_iter().find(|&f| f > 0.0)
}

/// Zeros of a symbol-spaced FIR fit of a channel response.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMap {
    /// Finite zeros in the z-plane.
    pub zeros: Vec<Complex64>,
    pub n_taps: usize,
    /// Zeros pushed to infinity by negligible leading coefficients.
    pub at_infinity: usize,
}

impl ZeroMap {
    /// Zeros whose radius is within `tol` of one.
    pub fn near_unit_circle(&self, tol: f64) -> Vec<Complex64> {
        self.zeros
            .iter()
            .copied()
            .filter(|z| (z.norm() - 1.0).abs() <= tol)
            .collect()
    }

    /// Smallest distance from a near-unit-circle zero to `point`.
    pub fn closest_to(&self, point: Complex64, tol: f64) -> Option<f64> {
        self.near_unit_circle(tol)
            .iter()
            .map(|z| (z - point).norm())
            .min_by(f64::total_cmp)
    }
}

const ZERO_MAP_FFT: usize = 4096;

/// Samples `h` on the tap-rate DFT grid (no content beyond +-rate/2), forms the
/// impulse response, keeps `n_taps` taps around the energy peak and returns the
/// roots of the tap polynomial.
pub fn symbol_spaced_zeros(h: &ChannelResponse, rate: f64, n_taps: usize) -> Result<ZeroMap> {
    if n_taps < 2 {
        return Err(Error::invalid("a zero map needs at least two taps"));
    }
    if !(rate > 0.0) {
        return Err(Error::invalid("tap rate must be positive"));
    }
    let n = ZERO_MAP_FFT.max(n_taps.next_power_of_two());
    let bin = rate / n as f64;
    let f = h.freqs();
    if f.is_empty() || f[0] > -rate / 2.0 + bin || f[f.len() - 1] < rate / 2.0 - 2.0 * bin {
        return Err(Error::invalid(format!(
            "response must cover +-{} Hz",
            rate / 2.0
        )));
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| h.interpolate(fft::bin_frequency(k, n, rate)))
        .collect();
    fft::inverse(&mut buf);
    let peak = (0..n)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap_or(0);
    let start = (peak + n - n_taps / 2) % n;
    let taps: Vec<Complex64> = (0..n_taps).map(|i| buf[(start + i) % n]).collect();
    let (zeros, at_infinity) = polynomial_roots(&taps)?;
    Ok(ZeroMap {
        zeros,
        n_taps,
        at_infinity,
    })
}

/// Roots in z of sum_i c_i z^(-i), i.e. of the degree n-1 polynomial with
/// coefficients `c` in descending powers. Returns finite roots and the count
/// lost to negligible leading coefficients.
fn polynomial_roots(c: &[Complex64]) -> Result<(Vec<Complex64>, usize)> {
    let scale = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Numerical("all taps are zero".into()));
    }
    let c: Vec<Complex64> = c
        .iter()
        .map(|&v| if v.norm() < 1e-13 * scale { Complex64::new(0.0, 0.0) } else { v })
        .collect();
    let lead = c.iter().position(|v| v.norm() > 0.0).unwrap_or(0);
    let last = c.iter().rposition(|v| v.norm() > 0.0).unwrap_or(lead);
    // Trailing zero coefficients are exact roots at the origin.
    let mut roots = vec![Complex64::new(0.0, 0.0); c.len() - 1 - last];
    let poly = &c[lead..=last];
    let deg = poly.len() - 1;
    if deg == 0 {
        return Ok((roots, lead));
    }
    let mut companion = DMatrix::<Complex64>::zeros(deg, deg);
    for j in 0..deg {
        companion[(0, j)] = -poly[j + 1] / poly[0];
    }
    for i in 1..deg {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    let eig = companion
        .try_schur(1e-15, 10_000)
        .and_then(|s| s.eigenvalues())
        .ok_or_else(|| Error::Numerical("companion eigenvalues did not converge".into()))?;
    for mut z in eig.iter().copied() {
        for _ in 0..3 {
            let (p, dp) = horner(poly, z);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.is_finite() {
                break;
            }
            z -= step;
        }
        let (p, _) = horner(poly, z);
        let size: f64 = poly
            .iter()
            .enumerate()
            .map(|(i, a)| a.norm() * z.norm().powi((deg - i) as i32))
            .sum();
        let residual = p.norm() / size;
        if !(residual <= 1e-6) {
            return Err(Error::Numerical(format!(
                "root {z} has relative residual {residual:.3e}"
            )));
        }
        roots.push(z);
    }
    Ok((roots, lead))
}

fn horner(poly: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in poly {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Drives `link` with a small-signal envelope sqrt(1/m + cos(2 pi f_rf t)) on
/// an `n`-sample grid at `fs` and returns the complex photocurrent amplitude at
/// f_rf relative to back-to-back square-law detection.
pub fn tone_probe<F>(
    link: F,
    f_rf: f64,
    mod_index: f64,
    fs: f64,
    n: usize,
    wavelength_nm: f64,
) -> Result<Complex64>
where
    F: Fn(&ComplexWaveform) -> Result<RealWaveform>,
{
    if !(mod_index > 0.0 && mod_index <= 0.1) {
        return Err(Error::invalid(format!(
            "modulation index {mod_index} outside (0, 0.1]"
        )));
    }
    let cycles = f_rf * n as f64 / fs;
    let bin = cycles.round();
    if (cycles - bin).abs() > 1e-9 * cycles.max(1.0) || bin < 1.0 {
        return Err(Error::invalid(format!(
            "{f_rf} Hz is not on the {n}-point DFT grid at {fs} Hz"
        )));
    }
    let source = small_signal_source(1.0 / mod_index, f_rf, fs, n as f64 / fs, wavelength_nm)?;
    let current = link(&source)?;
    if current.len() != n {
        return Err(Error::invalid("link changed the number of samples"));
    }
    let k = bin as usize;
    let acc: Complex64 = current
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &x)| x * Complex64::from_polar(1.0, -2.0 * PI * (k * i % n) as f64 / n as f64))
        .sum();
    Ok(acc / (n as f64 / 2.0))
}

/// 10 log10(E[a^2] / E[(y - a)^2]), capped at [`SNR_CAP_DB`].
pub fn snr_db(y: &[f64], a: &[f64]) -> f64 {
    let sig: f64 = a.iter().map(|v| v * v).sum();
    let err: f64 = y.iter().zip(a).map(|(p, q)| (p - q).powi(2)).sum();
    if err == 0.0 {
        return SNR_CAP_DB;
    }
    (10.0 * (sig / err).log10()).min(SNR_CAP_DB)
}

/// Error-vector SNR of a normalized equalizer output over the payload symbols.
pub fn snr_estimate(y: &[f64], frame: &SymbolFrame) -> Result<f64> {
    if y.len() != frame.len() {
        return Err(Error::invalid(format!(
            "{} outputs for {} symbols",
            y.len(),
            frame.len()
        )));
    }
    let r = payload_range(frame.len(), frame.n_train());
    if r.is_empty() {
        return Err(Error::invalid("frame has no payload symbols"));
    }
    let a = frame.amplitudes();
    Ok(snr_db(&y[r.clone()], &a[r]))
}

/// Gray-bit error count over the payload of `sent`. The SNR field is NaN.
pub fn ber_count(decided: &SymbolFrame, sent: &SymbolFrame) -> Result<MetricReport> {
    if decided.len() != sent.len() {
        return Err(Error::invalid(format!(
            "decided frame has {} symbols, sent frame {}",
            decided.len(),
            sent.len()
        )));
    }
    let r = payload_range(sent.len(), sent.n_train());
    let a = &decided.gray_bits()[2 * r.start..2 * r.end];
    let b = &sent.gray_bits()[2 * r.start..2 * r.end];
    let errors = a.iter().zip(b).filter(|(x, y)| x != y).count() as u64;
    Ok(MetricReport::from_counts(f64::NAN, errors, a.len() as u64))
}

/// SNR and BER of a normalized equalizer output.
pub fn evaluate(y: &[f64], sent: &SymbolFrame) -> Result<MetricReport> {
    let snr = snr_estimate(y, sent)?;
    let decided = crate::equalizer::decide_pam4(y);
    let mut report = ber_count(&decided, sent)?;
    report.snr_db = snr;
    Ok(report)
}

/// Gaussian-noise BER of Gray-coded PAM-4 at the given SNR.
pub fn ber_theory(snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    0.75 * q_function((snr / 5.0).sqrt())
}

pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}
