//! PAM-4 transmitter: symbol generation, rectangular drive waveform and a
//! chirp-free Mach-Zehnder modulator.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{ComplexWaveform, RealWaveform};

/// Gray map from level to (msb, lsb): 00->0, 01->1, 11->2, 10->3.
pub const GRAY_BITS: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

/// Normalized amplitude of each level, equally spaced in [-1, 1].
pub const LEVEL_AMPLITUDES: [f64; 4] = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];

/// Mean of the squared level amplitudes, 5/9.
pub const REFERENCE_POWER: f64 = 5.0 / 9.0;

pub fn level_amplitude(level: u8) -> f64 {
    LEVEL_AMPLITUDES[level as usize]
}

fn level_from_bits(msb: u8, lsb: u8) -> u8 {
    match (msb, lsb) {
        (0, 0) => 0,
        (0, 1) => 1,
        (1, 1) => 2,
        _ => 3,
    }
}

/// A PAM-4 symbol sequence, its Gray-coded bits and the training prefix length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolFrame {
    levels: Vec<u8>,
    gray_bits: Vec<u8>,
    n_train: usize,
}

impl SymbolFrame {
    pub fn from_levels(levels: Vec<u8>, n_train: usize) -> Result<Self> {
        if n_train > levels.len() {
            return Err(Error::invalid(format!(
                "n_train {n_train} exceeds frame length {}",
                levels.len()
            )));
        }
        if let Some(bad) = levels.iter().find(|&&l| l > 3) {
            return Err(Error::invalid(format!("PAM-4 level {bad} out of range")));
        }
        let gray_bits = levels
            .iter()
            .flat_map(|&l| GRAY_BITS[l as usize])
            .collect();
        Ok(Self {
            levels,
            gray_bits,
            n_train,
        })
    }

    pub fn from_gray_bits(bits: &[u8], n_train: usize) -> Result<Self> {
        if bits.len() % 2 != 0 {
            return Err(Error::invalid("bit count must be even"));
        }
        let levels = bits
            .chunks_exact(2)
            .map(|b| level_from_bits(b[0], b[1]))
            .collect();
        Self::from_levels(levels, n_train)
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn gray_bits(&self) -> &[u8] {
        &self.gray_bits
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Normalized reference amplitudes in {-1, -1/3, 1/3, 1}.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| level_amplitude(l)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxConfig {
    /// Symbol rate in baud.
    pub baud: f64,
    /// Samples per symbol.
    pub sps: usize,
    /// Peak-to-peak drive voltage.
    pub vpp: f64,
    /// MZM half-wave voltage.
    pub vpi: f64,
    pub vbias: f64,
    /// CW laser power in watts.
    pub laser_power: f64,
    pub seed: u64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            baud: 50e9,
            sps: 32,
            vpp: 0.4,
            vpi: 4.0,
            vbias: 3.0,
            laser_power: 1e-3,
            seed: 1,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.baud > 0.0 && self.baud.is_finite()) {
            return Err(Error::invalid("baud must be positive"));
        }
        if self.sps == 0 {
            return Err(Error::invalid("sps must be at least 1"));
        }
        if !(self.vpp > 0.0 && self.vpi > 0.0 && self.laser_power > 0.0) {
            return Err(Error::invalid("vpp, vpi and laser_power must be positive"));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.baud * self.sps as f64
    }

    /// False when the sample interval is 1 ps or longer.
    pub fn resolves_subpicosecond(&self) -> bool {
        1.0 / self.sample_rate() < 1e-12
    }
}

/// Uniform i.i.d. PAM-4 levels from a ChaCha8 stream seeded with `seed`.
pub fn gen_pam4(n: usize, n_train: usize, seed: u64) -> Result<SymbolFrame> {
    if n_train > n {
        return Err(Error::invalid(format!(
            "n_train {n_train} exceeds symbol count {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = (0..n).map(|_| rng.random_range(0..4u8)).collect();
    SymbolFrame::from_levels(levels, n_train)
}

/// Zero-order-hold drive: level amplitudes scaled to vpp/2, sps samples each.
pub fn drive_waveform(frame: &SymbolFrame, cfg: &TxConfig) -> Result<RealWaveform> {
    cfg.validate()?;
    if frame.is_empty() {
        return Err(Error::invalid("cannot build a drive waveform from an empty frame"));
    }
    let half = cfg.vpp / 2.0;
    let mut samples = Vec::with_capacity(frame.len() * cfg.sps);
    for &l in frame.levels() {
        let v = level_amplitude(l) * half;
        samples.extend(std::iter::repeat_n(v, cfg.sps));
    }
    RealWaveform::new(samples, cfg.sample_rate())
}

/// Chirp-free MZM field transfer sqrt(P) cos(pi (vbias + v) / (2 vpi)).
pub fn mzm_modulate(v: &RealWaveform, cfg: &TxConfig, wavelength_nm: f64) -> Result<ComplexWaveform> {
    cfg.validate()?;
    if (v.fs() - cfg.sample_rate()).abs() > 1e-9 * cfg.sample_rate() {
        return Err(Error::invalid(format!(
            "drive sampled at {} Hz but config expects {} Hz",
            v.fs(),
            cfg.sample_rate()
        )));
    }
    let amp = cfg.laser_power.sqrt();
    let k = PI / (2.0 * cfg.vpi);
    let samples = v
        .samples()
        .iter()
        .map(|&x| Complex64::new(amp * (k * (cfg.vbias + x)).cos(), 0.0))
        .collect();
    ComplexWaveform::new(samples, v.fs(), wavelength_nm)
}

/// Exact envelope sqrt(A + cos(2 pi f_rf t)), sampled for `duration` seconds.
pub fn small_signal_source(
    bias: f64,
    f_rf: f64,
    fs: f64,
    duration: f64,
    wavelength_nm: f64,
) -> Result<ComplexWaveform> {
    if !(bias > 1.0) {
        return Err(Error::invalid(format!("DC bias must exceed 1, got {bias}")));
    }
    if !(f_rf >= 0.0 && f_rf < fs / 2.0) {
        return Err(Error::invalid(format!(
            "tone {f_rf} Hz must lie below Nyquist {} Hz",
            fs / 2.0
        )));
    }
    let n = (duration * fs).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            Complex64::new((bias + (2.0 * PI * f_rf * t).cos()).sqrt(), 0.0)
        })
        .collect();
    ComplexWaveform::new(samples, fs, wavelength_nm)
}
