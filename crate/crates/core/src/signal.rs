//! Sampled waveforms and the frequency-domain operators shared by every stage
//! of the link: circular delay, arbitrary transfer functions, brick-wall
//! low-pass filtering and power bookkeeping.
//!
//! Optical fields are complex envelopes; the carrier is never sampled.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

/// Real electrical signal: drive voltage or photocurrent.
#[derive(Debug, Clone, PartialEq)]
pub struct RealWaveform {
    samples: Vec<f64>,
    fs: f64,
}

impl RealWaveform {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {fs}")));
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Complex baseband optical field envelope in sqrt(W).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    samples: Vec<Complex64>,
    fs: f64,
    wavelength_nm: f64,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, fs: f64, wavelength_nm: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {fs}")));
        }
        if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
            return Err(Error::invalid(format!(
                "wavelength must be positive, got {wavelength_nm} nm"
            )));
        }
        Ok(Self {
            samples,
            fs,
            wavelength_nm,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same metadata, new samples. Length is not required to match.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            fs: self.fs,
            wavelength_nm: self.wavelength_nm,
        }
    }

    /// Sum of |x|^2 over all samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Complex transfer values on a strictly increasing frequency grid (Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    freqs: Vec<f64>,
    values: Vec<Complex64>,
}

impl ChannelResponse {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} frequencies but {} values",
                freqs.len(),
                values.len()
            )));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("frequency grid must be strictly increasing"));
        }
        Ok(Self { freqs, values })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Multiplies every value by a real scalar.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            freqs: self.freqs.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Linear interpolation of the complex response; zero outside the grid.
    pub fn interpolate(&self, f: f64) -> Complex64 {
        let n = self.freqs.len();
        if n == 0 || f < self.freqs[0] || f > self.freqs[n - 1] {
            return Complex64::new(0.0, 0.0);
        }
        let idx = self.freqs.partition_point(|&x| x <= f);
        if idx == 0 {
            return self.values[0];
        }
        if idx >= n {
            return self.values[n - 1];
        }
        let (f0, f1) = (self.freqs[idx - 1], self.freqs[idx]);
        let t = (f - f0) / (f1 - f0);
        self.values[idx - 1] * (1.0 - t) + self.values[idx] * t
    }
}

/// Frequency of each FFT bin in Hz (negative half in the upper bins).
pub fn fft_frequencies(n: usize, fs: f64) -> Vec<f64> {
    (0..n).map(|k| fft::bin_frequency(k, n, fs)).collect()
}

/// Delays the envelope by `tau` seconds: spectrum times exp(-j w tau).
///
/// The delay is circular; samples pushed past the end reappear at the start.
pub fn apply_delay(w: &ComplexWaveform, tau: f64) -> Result<ComplexWaveform> {
    if !tau.is_finite() {
        return Err(Error::invalid(format!("delay must be finite, got {tau}")));
    }
    if tau == 0.0 {
        if w.is_empty() {
            return Err(Error::invalid("cannot delay an empty waveform"));
        }
        return Ok(w.clone());
    }
    apply_response(w, |omega| Complex64::from_polar(1.0, -omega * tau))
}

/// Multiplies the spectrum of `w` by `h(omega)` evaluated on its FFT grid.
pub fn apply_response<H>(w: &ComplexWaveform, h: H) -> Result<ComplexWaveform>
where
    H: Fn(f64) -> Complex64,
{
    if w.is_empty() {
        return Err(Error::invalid("cannot filter an empty waveform"));
    }
    let n = w.len();
    let mut buf = w.samples.clone();
    fft::forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= h(fft::bin_omega(k, n, w.fs));
    }
    fft::inverse(&mut buf);
    Ok(w.with_samples(buf))
}

/// Ideal low-pass: zeroes every bin with |f| > cutoff.
pub fn lowpass(w: &RealWaveform, cutoff: f64) -> Result<RealWaveform> {
    if w.is_empty() {
        return Err(Error::invalid("cannot filter an empty waveform"));
    }
    if !(cutoff > 0.0 && cutoff < w.fs / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff} Hz outside (0, {}) Hz",
            w.fs / 2.0
        )));
    }
    let n = w.len();
    let mut buf: Vec<Complex64> = w.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft::forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        // The Nyquist bin is always above the cutoff, so the mask is symmetric.
        if fft::bin_frequency(k, n, w.fs).abs() > cutoff || (n % 2 == 0 && k == n / 2) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft::inverse(&mut buf);
    RealWaveform::new(buf.into_iter().map(|v| v.re).collect(), w.fs)
}

/// mean(|x|^2) in watts; zero for an empty waveform.
pub fn mean_power(w: &ComplexWaveform) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.energy() / w.len() as f64
}

/// Rescales the field by a positive real factor so its mean power equals `p`.
pub fn scale_to_power(w: &ComplexWaveform, p: f64) -> Result<ComplexWaveform> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::invalid(format!("target power must be >= 0, got {p}")));
    }
    let current = mean_power(w);
    if p == 0.0 {
        return Ok(w.with_samples(vec![Complex64::new(0.0, 0.0); w.len()]));
    }
    if !(current > 0.0) {
        return Err(Error::invalid("cannot scale a zero-power waveform to nonzero power"));
    }
    let g = (p / current).sqrt();
    Ok(w.with_samples(w.samples.iter().map(|v| v * g).collect()))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, n: usize, amp: f64) -> ComplexWaveform {
        let s = (0..n)
            .map(|i| Complex64::from_polar(amp, 2.0 * PI * f * i as f64 / fs))
            .collect();
        ComplexWaveform::new(s, fs, 1371.0).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    fn random_field(n: usize, seed: u64) -> ComplexWaveform {
        let re = noise(n, seed);
        let im = noise(n, seed + 1);
        let s = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
        ComplexWaveform::new(s, 1.6e12, 1371.0).unwrap()
    }

    #[test]
    fn constructors_reject_bad_metadata() {
        assert!(RealWaveform::new(vec![1.0], 0.0).is_err());
        assert!(ComplexWaveform::new(vec![], 1.0, -3.0).is_err());
        assert!(ChannelResponse::new(vec![1.0, 1.0], vec![Complex64::default(); 2]).is_err());
        assert!(ChannelResponse::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn zero_delay_is_identity() {
        let w = random_field(64, 3);
        assert_eq!(apply_delay(&w, 0.0).unwrap(), w);
    }

    #[test]
    fn delayed_tone_rotates_phase() {
        // 10 GHz tone on a grid where it sits exactly on a bin.
        let fs = 1.28e12;
        let n = 1280;
        let w = tone(10e9, fs, n, 1.0);
        let out = apply_delay(&w, 14e-12).unwrap();
        let expected = -2.0 * PI * 10e9 * 14e-12;
        assert!((expected + 0.8796).abs() < 1e-4);
        for (a, b) in w.samples().iter().zip(out.samples()) {
            let rot = b / a;
            assert!((rot.arg() - expected).abs() < 1e-9);
            assert!((rot.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn integer_sample_delay_is_rotation() {
        let w = random_field(200, 9);
        let k = 7;
        let out = apply_delay(&w, k as f64 / w.fs()).unwrap();
        let peak = w.samples().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..w.len() {
            let expect = w.samples()[(i + w.len() - k) % w.len()];
            assert!((out.samples()[i] - expect).norm() < 1e-9 * peak);
        }
    }

    #[test]
    fn empty_waveform_is_rejected() {
        let w = ComplexWaveform::new(vec![], 1.0, 1.0).unwrap();
        assert!(apply_delay(&w, 1.0).is_err());
        assert!(apply_response(&w, |_| Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn unit_response_is_identity_and_delay_response_matches() {
        let w = random_field(256, 5);
        let id = apply_response(&w, |_| Complex64::new(1.0, 0.0)).unwrap();
        for (a, b) in w.samples().iter().zip(id.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        let tau = 3.3e-12;
        let a = apply_response(&w, |om| Complex64::from_polar(1.0, -om * tau)).unwrap();
        let b = apply_delay(&w, tau).unwrap();
        let scale = w.energy().sqrt();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn brick_wall_response_suppresses_upper_band() {
        let n = 4096;
        let w = random_field(n, 11);
        let fs = w.fs();
        let out = apply_response(&w, |om| {
            if (om / (2.0 * PI)).abs() <= fs / 4.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        let mut spec = out.samples().to_vec();
        fft::forward(&mut spec);
        let (mut hi, mut total) = (0.0, 0.0);
        for (k, v) in spec.iter().enumerate() {
            let p = v.norm_sqr();
            total += p;
            if fft::bin_frequency(k, n, fs).abs() > fs / 4.0 {
                hi += p;
            }
        }
        assert!(10.0 * (hi / total).log10() < -60.0);
    }

    #[test]
    fn lowpass_contract() {
        let fs = 160e9;
        let n = 1600;
        let dc = RealWaveform::new(vec![0.7; n], fs).unwrap();
        let out = lowpass(&dc, 10e9).unwrap();
        assert!(out.samples().iter().all(|v| (v - 0.7).abs() < 1e-12));

        // Two tones at 5 and 40 GHz, cut at 25 GHz.
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 5e9 * t).cos() + (2.0 * PI * 40e9 * t).cos()
            })
            .collect();
        let two = RealWaveform::new(s, fs).unwrap();
        let out = lowpass(&two, 25e9).unwrap();
        let bin = |x: &[f64], f: f64| {
            let k = (f / fs * n as f64).round() as usize;
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                acc += Complex64::from_polar(*v, -2.0 * PI * (k * i) as f64 / n as f64);
            }
            acc.norm() * 2.0 / n as f64
        };
        let a5 = bin(out.samples(), 5e9);
        let a40 = bin(out.samples(), 40e9);
        assert!((a5 - 1.0).abs() < 1e-3);
        assert!(20.0 * (a40 + 1e-300).log10() < -60.0);

        // Band-limited input passes untouched just below Nyquist.
        let out = lowpass(&two, fs / 2.0 - 1e6).unwrap();
        for (a, b) in two.samples().iter().zip(out.samples()) {
            assert!((a - b).abs() < 1e-9);
        }

        assert!(lowpass(&two, 0.0).is_err());
        assert!(lowpass(&two, fs / 2.0).is_err());
    }

    #[test]
    fn power_helpers() {
        let ones = ComplexWaveform::new(vec![Complex64::new(1.0, 0.0); 8], 1.0, 1.0).unwrap();
        assert_eq!(mean_power(&ones), 1.0);
        let zeros = ComplexWaveform::new(vec![Complex64::default(); 8], 1.0, 1.0).unwrap();
        assert_eq!(mean_power(&zeros), 0.0);
        let t = tone(1e9, 64e9, 64, 0.3);
        assert!((mean_power(&t) - 0.09).abs() < 1e-15);

        assert!(scale_to_power(&zeros, 1.0).is_err());
        let z = scale_to_power(&t, 0.0).unwrap();
        assert!(z.samples().iter().all(|v| v.norm() == 0.0));
        let same = scale_to_power(&t, mean_power(&t)).unwrap();
        for (a, b) in t.samples().iter().zip(same.samples()) {
            assert!((a - b).norm() < 1e-15);
        }

        // 1 mW down to -6 dBm: power ratio 10^-0.6, field ratio 10^-0.3.
        let mw = scale_to_power(&t, 1e-3).unwrap();
        let out = scale_to_power(&mw, dbm_to_watts(-6.0)).unwrap();
        let ratio = mean_power(&out) / mean_power(&mw);
        assert!((ratio - 10f64.powf(-0.6)).abs() < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(-6.0)) + 6.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn delay_conserves_energy_and_composes(seed in 0u64..1000, a in -30e-12..30e-12f64, b in -30e-12..30e-12f64) {
                let w = random_field(128, seed);
                let wa = apply_delay(&w, a).unwrap();
                prop_assert!((wa.energy() - w.energy()).abs() <= 1e-9 * w.energy());
                let wab = apply_delay(&wa, b).unwrap();
                let direct = apply_delay(&w, a + b).unwrap();
                let scale = w.energy().sqrt();
                for (x, y) in wab.samples().iter().zip(direct.samples()) {
                    prop_assert!((x - y).norm() <= 1e-9 * scale);
                }
            }

            #[test]
            fn unit_modulus_response_conserves_energy(seed in 0u64..1000, k in 0.0..1e-22f64) {
                let w = random_field(128, seed);
                let out = apply_response(&w, |om| Complex64::from_polar(1.0, k * om * om)).unwrap();
                prop_assert!((out.energy() - w.energy()).abs() <= 1e-9 * w.energy());
            }

            #[test]
            fn scale_round_trips(seed in 0u64..1000, p in 1e-9..1e-1f64) {
                let w = random_field(64, seed);
                let out = scale_to_power(&w, p).unwrap();
                prop_assert!((mean_power(&out) - p).abs() <= 1e-12 * p);
            }
        }
    }
}
