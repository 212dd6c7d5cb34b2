//! Field-level optical equalizers placed in front of the photodiode.
//!
//! The dual-tap structure is: 1x2 splitter, ODL tau1 on arm 1, phase shifter
//! phi on arm 2, a 2x2 coupler, ODL tau2 on the second coupler output, and a
//! polarization beam combiner so the two outputs add in power at the PD.
//! Every element carries its physical 1/sqrt(2) normalization, so the chain
//! is lossless.
//!
//! The single-tap OE-FFE baseline recombines both arms into one port and
//! therefore averages a 3 dB loss.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::signal::{ComplexWaveform, RealWaveform};

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtOdfeConfig {
    /// First delay line, seconds.
    pub tau1: f64,
    /// Second delay line, seconds.
    pub tau2: f64,
    /// Phase shifter, radians.
    pub phi: f64,
}

impl DtOdfeConfig {
    pub fn from_ps(tau1_ps: f64, tau2_ps: f64, phi: f64) -> Self {
        Self {
            tau1: tau1_ps * 1e-12,
            tau2: tau2_ps * 1e-12,
            phi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau1 >= 0.0 && self.tau2 >= 0.0) {
            return Err(Error::invalid("delay lines must be non-negative"));
        }
        check_phase(self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OeFfeConfig {
    pub tau: f64,
    pub phi: f64,
}

impl OeFfeConfig {
    pub fn from_ps(tau_ps: f64, phi: f64) -> Self {
        Self {
            tau: tau_ps * 1e-12,
            phi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(Error::invalid("delay line must be non-negative"));
        }
        check_phase(self.phi)
    }
}

fn check_phase(phi: f64) -> Result<()> {
    // Allow for rounding in grids that end exactly at +-pi.
    if !(phi.abs() <= PI * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!("phase {phi} outside [-pi, pi]")));
    }
    Ok(())
}

/// Normalized 2x2 coupler Jones matrix (1/sqrt 2) [[1, j], [j, 1]].
pub fn coupler_matrix() -> [[Complex64; 2]; 2] {
    let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let b = J * FRAC_1_SQRT_2;
    [[a, b], [b, a]]
}

/// Spectrum of a field, kept so several optical settings can share one FFT.
#[derive(Debug, Clone)]
pub struct FieldSpectrum {
    bins: Vec<Complex64>,
    fs: f64,
    wavelength_nm: f64,
}

impl FieldSpectrum {
    pub fn new(e: &ComplexWaveform) -> Result<Self> {
        if e.is_empty() {
            return Err(Error::invalid("empty optical field"));
        }
        let mut bins = e.samples().to_vec();
        fft::forward(&mut bins);
        Ok(Self {
            bins,
            fs: e.fs(),
            wavelength_nm: e.wavelength_nm(),
        })
    }

    fn synthesize<F>(&self, gain: F) -> Result<ComplexWaveform>
    where
        F: Fn(f64) -> Complex64,
    {
        let n = self.bins.len();
        let mut out: Vec<Complex64> = self
            .bins
            .iter()
            .enumerate()
            .map(|(k, x)| x * gain(fft::bin_omega(k, n, self.fs)))
            .collect();
        fft::inverse(&mut out);
        ComplexWaveform::new(out, self.fs, self.wavelength_nm)
    }

    pub fn to_waveform(&self) -> Result<ComplexWaveform> {
        self.synthesize(|_| Complex64::new(1.0, 0.0))
    }

    pub fn dual_tap(&self, cfg: &DtOdfeConfig) -> Result<(ComplexWaveform, ComplexWaveform)> {
        cfg.validate()?;
        let m = coupler_matrix();
        let rot = Complex64::from_polar(FRAC_1_SQRT_2, cfg.phi);
        let (tau1, tau2) = (cfg.tau1, cfg.tau2);
        let e3 = self.synthesize(|om| {
            let e1 = Complex64::from_polar(FRAC_1_SQRT_2, -om * tau1);
            m[0][0] * e1 + m[0][1] * rot
        })?;
        let e4 = self.synthesize(|om| {
            let e1 = Complex64::from_polar(FRAC_1_SQRT_2, -om * tau1);
            (m[1][0] * e1 + m[1][1] * rot) * Complex64::from_polar(1.0, -om * tau2)
        })?;
        Ok((e3, e4))
    }

    pub fn oe_ffe(&self, cfg: &OeFfeConfig) -> Result<ComplexWaveform> {
        cfg.validate()?;
        let rot = Complex64::from_polar(1.0, cfg.phi);
        let tau = cfg.tau;
        self.synthesize(|om| 0.5 * (Complex64::from_polar(1.0, -om * tau) + rot))
    }
}

/// Dual-tap optical equalizer; returns the two fields entering the PBC.
pub fn dt_optical_eq(
    e_cd: &ComplexWaveform,
    cfg: &DtOdfeConfig,
) -> Result<(ComplexWaveform, ComplexWaveform)> {
    FieldSpectrum::new(e_cd)?.dual_tap(cfg)
}

/// Single-output interferometer 0.5 (E(t - tau) + e^{j phi} E(t)).
pub fn oe_ffe_optical(e_cd: &ComplexWaveform, cfg: &OeFfeConfig) -> Result<ComplexWaveform> {
    FieldSpectrum::new(e_cd)?.oe_ffe(cfg)
}

/// PBC followed by square-law detection: R (|e3|^2 + |e4|^2).
pub fn pbc_detect(
    e3: &ComplexWaveform,
    e4: &ComplexWaveform,
    responsivity: f64,
) -> Result<RealWaveform> {
    if e3.len() != e4.len() {
        return Err(Error::invalid(format!(
            "PBC inputs differ in length: {} vs {}",
            e3.len(),
            e4.len()
        )));
    }
    if e3.fs() != e4.fs() {
        return Err(Error::invalid("PBC inputs differ in sample rate"));
    }
    let samples = e3
        .samples()
        .iter()
        .zip(e4.samples())
        .map(|(a, b)| responsivity * (a.norm_sqr() + b.norm_sqr()))
        .collect();
    RealWaveform::new(samples, e3.fs())
}

/// Square-law detection R |e|^2 without any optical equalizer.
pub fn direct_detect(e: &ComplexWaveform, responsivity: f64) -> Result<RealWaveform> {
    if e.is_empty() {
        return Err(Error::invalid("cannot detect an empty field"));
    }
    let samples = e
        .samples()
        .iter()
        .map(|v| responsivity * v.norm_sqr())
        .collect();
    RealWaveform::new(samples, e.fs())
}
