//! Experiment settings and their flat `section.key = value` text format.
//!
//! Blank lines and `#` comments are ignored, every key is optional, and an
//! unknown key is an error. Numbers accept `pi` factors, e.g. `-3*pi/4`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::equalizer::{DfeConfig, FfeConfig, VnleConfig};
use crate::error::{Error, Result};
use crate::fiber::FiberConfig;
use crate::optical::{DtOdfeConfig, OeFfeConfig};
use crate::receiver::RxConfig;
use crate::tx::TxConfig;

/// Symbols per link run at full scale.
pub const FULL_SYMBOLS: usize = 100_000;
/// Symbols per link run with the smoke flag.
pub const SMOKE_SYMBOLS: usize = 10_000;
pub const DEFAULT_TRAINING: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub enum OpticalConfig {
    None,
    DualTap(DtOdfeConfig),
    OeFfe(OeFfeConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DspConfig {
    Ffe(FfeConfig),
    Dfe(DfeConfig),
    Vnle(VnleConfig),
}

/// Everything needed for one end-to-end link run.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub tx: TxConfig,
    pub fiber: FiberConfig,
    pub optical: OpticalConfig,
    pub rx: RxConfig,
    pub dsp: DspConfig,
    /// Received optical power at the photodiode input.
    pub rop_dbm: f64,
    pub n_symbols: usize,
    pub n_train: usize,
    /// Master seed; symbol and noise streams derive from it.
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Settings::default().link()
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.fiber.validate()?;
        self.rx.validate()?;
        match &self.optical {
            OpticalConfig::None => {}
            OpticalConfig::DualTap(c) => c.validate()?,
            OpticalConfig::OeFfe(c) => c.validate()?,
        }
        if !(-30.0..=10.0).contains(&self.rop_dbm) {
            return Err(Error::invalid(format!(
                "ROP {} dBm outside [-30, 10]",
                self.rop_dbm
            )));
        }
        if self.n_train > self.n_symbols {
            return Err(Error::invalid("n_train exceeds n_symbols"));
        }
        let cutoff = self.rx.lpf_cutoff_frac * self.tx.baud;
        if cutoff >= self.tx.sample_rate() / 2.0 {
            return Err(Error::invalid(format!(
                "receiver cutoff {cutoff} Hz is not below Nyquist"
            )));
        }
        Ok(())
    }

    /// Copy with a different master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticalKind {
    None,
    DualTap,
    OeFfe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DspKind {
    Ffe,
    Dfe,
    Vnle,
}

/// Grids used by the sweep experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Phase step is pi / phi_divisions over [-pi, pi].
    pub phi_divisions: usize,
    pub delay_max_ps: f64,
    pub delay_step_ps: f64,
    /// Local refinement step around the coarse delay optimum; 0 disables.
    pub delay_refine_ps: f64,
    pub length_max_km: f64,
    pub length_step_km: f64,
    /// ROP used by the distance sweep and the OE-FFE comparison.
    pub distance_rop_dbm: f64,
    pub rop_min_dbm: f64,
    pub rop_max_dbm: f64,
    pub rop_step_db: f64,
    /// Fiber length of the ROP sweep.
    pub rop_length_km: f64,
    pub bauds: Vec<f64>,
    pub oeffe_tau_max_ps: f64,
    pub oeffe_tau_step_ps: f64,
    pub oeffe_phi_divisions: usize,
    /// Symbols per point while searching optical coefficients.
    pub search_symbols: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            phi_divisions: 16,
            delay_max_ps: 20.0,
            delay_step_ps: 2.0,
            delay_refine_ps: 1.0,
            length_max_km: 15.0,
            length_step_km: 1.0,
            distance_rop_dbm: -6.0,
            rop_min_dbm: -10.0,
            rop_max_dbm: 0.0,
            rop_step_db: 1.0,
            rop_length_km: 10.0,
            bauds: vec![50e9, 100e9],
            oeffe_tau_max_ps: 20.0,
            oeffe_tau_step_ps: 2.0,
            oeffe_phi_divisions: 8,
            search_symbols: 20_000,
        }
    }
}

/// Contents of a settings file: shared link parameters, every optical and
/// DSP variant's parameters, the selected variants, and sweep grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub rop_dbm: f64,
    pub n_symbols: usize,
    pub n_train: usize,
    pub tx: TxConfig,
    pub fiber: FiberConfig,
    pub rx: RxConfig,
    pub optical: OpticalKind,
    pub dual_tap: DtOdfeConfig,
    pub oe_ffe: OeFfeConfig,
    pub dsp: DspKind,
    pub ffe: FfeConfig,
    pub dfe: DfeConfig,
    pub vnle: VnleConfig,
    pub grid: SweepGrid,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 1,
            rop_dbm: -6.0,
            n_symbols: FULL_SYMBOLS,
            n_train: DEFAULT_TRAINING,
            tx: TxConfig::default(),
            fiber: FiberConfig::default(),
            rx: RxConfig::default(),
            optical: OpticalKind::None,
            dual_tap: DtOdfeConfig::from_ps(14.0, 14.0, PI),
            oe_ffe: OeFfeConfig::from_ps(10.0, PI),
            dsp: DspKind::Ffe,
            ffe: FfeConfig::default(),
            dfe: DfeConfig::default(),
            vnle: VnleConfig::default(),
            grid: SweepGrid::default(),
        }
    }
}

fn parse_number(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim().to_ascii_lowercase();
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    if !t.contains("pi") {
        return Err(format!("not a number: {text:?}"));
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (t.as_str(), None),
    };
    let mut value = 1.0;
    for factor in num.split('*') {
        let f = factor.trim();
        let (sign, body) = match f.strip_prefix('-') {
            Some(rest) => (-1.0, rest.trim()),
            None => (1.0, f),
        };
        let v = if body == "pi" {
            PI
        } else {
            body.parse::<f64>()
                .map_err(|_| format!("not a number: {text:?}"))?
        };
        value *= sign * v;
    }
    if let Some(d) = den {
        let d: f64 = d
            .trim()
            .parse()
            .map_err(|_| format!("bad divisor in {text:?}"))?;
        value /= d;
    }
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("not finite: {text:?}"))
    }
}

fn parse_count(text: &str) -> std::result::Result<usize, String> {
    let v = parse_number(text)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(format!("expected a non-negative integer, got {text:?}"));
    }
    Ok(v as usize)
}

fn parse_bool(text: &str) -> std::result::Result<bool, String> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',').map(parse_number).collect()
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            s.set(key.trim(), value.trim()).map_err(|msg| Error::Config {
                line: idx + 1,
                msg,
            })?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = || parse_number(value);
        let count = || parse_count(value);
        match key {
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("seed must be an unsigned integer, got {value:?}"))?
            }
            "rop_dbm" => self.rop_dbm = num()?,
            "frame.n_symbols" => self.n_symbols = count()?,
            "frame.n_train" => self.n_train = count()?,
            "tx.baud" => self.tx.baud = num()?,
            "tx.sps" => self.tx.sps = count()?,
            "tx.vpp" => self.tx.vpp = num()?,
            "tx.vpi" => self.tx.vpi = num()?,
            "tx.vbias" => self.tx.vbias = num()?,
            "tx.laser_power" => self.tx.laser_power = num()?,
            "fiber.length_km" => self.fiber.length_km = num()?,
            "fiber.dispersion" => self.fiber.dispersion = num()?,
            "fiber.wavelength_nm" => self.fiber.wavelength_nm = num()?,
            "rx.responsivity" => self.rx.responsivity = num()?,
            "rx.noise_density" => self.rx.noise_density = num()?,
            "rx.lpf_cutoff_frac" => self.rx.lpf_cutoff_frac = num()?,
            "optical.kind" => {
                self.optical = match value {
                    "none" => OpticalKind::None,
                    "dt" => OpticalKind::DualTap,
                    "oeffe" => OpticalKind::OeFfe,
                    other => return Err(format!("optical.kind must be none, dt or oeffe, got {other:?}")),
                }
            }
            "optical.dt.tau1_ps" => self.dual_tap.tau1 = num()? * 1e-12,
            "optical.dt.tau2_ps" => self.dual_tap.tau2 = num()? * 1e-12,
            "optical.dt.phi" => self.dual_tap.phi = num()?,
            "optical.oeffe.tau_ps" => self.oe_ffe.tau = num()? * 1e-12,
            "optical.oeffe.phi" => self.oe_ffe.phi = num()?,
            "dsp.kind" => {
                self.dsp = match value {
                    "ffe" => DspKind::Ffe,
                    "dfe" => DspKind::Dfe,
                    "vnle" => DspKind::Vnle,
                    other => return Err(format!("dsp.kind must be ffe, dfe or vnle, got {other:?}")),
                }
            }
            "dsp.mu" => {
                let mu = num()?;
                self.ffe.mu = mu;
                self.dfe.mu = mu;
                self.vnle.mu = mu;
            }
            "dsp.epochs" => {
                let e = count()?;
                self.ffe.epochs = e;
                self.dfe.epochs = e;
                self.vnle.epochs = e;
            }
            "dsp.decision_directed" => {
                let dd = parse_bool(value)?;
                self.ffe.decision_directed = dd;
                self.dfe.decision_directed = dd;
                self.vnle.decision_directed = dd;
            }
            "dsp.ffe.n_taps" => self.ffe.n_taps = count()?,
            "dsp.dfe.n_ff" => self.dfe.n_ff = count()?,
            "dsp.dfe.n_fb" => self.dfe.n_fb = count()?,
            "dsp.vnle.m1" => self.vnle.m1 = count()?,
            "dsp.vnle.m2" => self.vnle.m2 = count()?,
            "dsp.vnle.m3" => self.vnle.m3 = count()?,
            "sweep.phi_divisions" => self.grid.phi_divisions = count()?,
            "sweep.delay_max_ps" => self.grid.delay_max_ps = num()?,
            "sweep.delay_step_ps" => self.grid.delay_step_ps = num()?,
            "sweep.delay_refine_ps" => self.grid.delay_refine_ps = num()?,
            "sweep.length_max_km" => self.grid.length_max_km = num()?,
            "sweep.length_step_km" => self.grid.length_step_km = num()?,
            "sweep.distance_rop_dbm" => self.grid.distance_rop_dbm = num()?,
            "sweep.rop_min_dbm" => self.grid.rop_min_dbm = num()?,
            "sweep.rop_max_dbm" => self.grid.rop_max_dbm = num()?,
            "sweep.rop_step_db" => self.grid.rop_step_db = num()?,
            "sweep.rop_length_km" => self.grid.rop_length_km = num()?,
            "sweep.bauds" => self.grid.bauds = parse_list(value)?,
            "sweep.oeffe_tau_max_ps" => self.grid.oeffe_tau_max_ps = num()?,
            "sweep.oeffe_tau_step_ps" => self.grid.oeffe_tau_step_ps = num()?,
            "sweep.oeffe_phi_divisions" => self.grid.oeffe_phi_divisions = count()?,
            "sweep.search_symbols" => self.grid.search_symbols = count()?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting except the seed.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("rop_dbm", self.rop_dbm.to_string());
        put("frame.n_symbols", self.n_symbols.to_string());
        put("frame.n_train", self.n_train.to_string());
        put("tx.baud", self.tx.baud.to_string());
        put("tx.sps", self.tx.sps.to_string());
        put("tx.vpp", self.tx.vpp.to_string());
        put("tx.vpi", self.tx.vpi.to_string());
        put("tx.vbias", self.tx.vbias.to_string());
        put("tx.laser_power", self.tx.laser_power.to_string());
        put("fiber.length_km", self.fiber.length_km.to_string());
        put("fiber.dispersion", self.fiber.dispersion.to_string());
        put("fiber.wavelength_nm", self.fiber.wavelength_nm.to_string());
        put("rx.responsivity", self.rx.responsivity.to_string());
        put("rx.noise_density", self.rx.noise_density.to_string());
        put("rx.lpf_cutoff_frac", self.rx.lpf_cutoff_frac.to_string());
        let optical = match self.optical {
            OpticalKind::None => "none",
            OpticalKind::DualTap => "dt",
            OpticalKind::OeFfe => "oeffe",
        };
        put("optical.kind", optical.into());
        put("optical.dt.tau1_ps", (self.dual_tap.tau1 * 1e12).to_string());
        put("optical.dt.tau2_ps", (self.dual_tap.tau2 * 1e12).to_string());
        put("optical.dt.phi", self.dual_tap.phi.to_string());
        put("optical.oeffe.tau_ps", (self.oe_ffe.tau * 1e12).to_string());
        put("optical.oeffe.phi", self.oe_ffe.phi.to_string());
        let dsp = match self.dsp {
            DspKind::Ffe => "ffe",
            DspKind::Dfe => "dfe",
            DspKind::Vnle => "vnle",
        };
        put("dsp.kind", dsp.into());
        put("dsp.mu", self.ffe.mu.to_string());
        put("dsp.epochs", self.ffe.epochs.to_string());
        put("dsp.decision_directed", self.ffe.decision_directed.to_string());
        put("dsp.ffe.n_taps", self.ffe.n_taps.to_string());
        put("dsp.dfe.n_ff", self.dfe.n_ff.to_string());
        put("dsp.dfe.n_fb", self.dfe.n_fb.to_string());
        put("dsp.vnle.m1", self.vnle.m1.to_string());
        put("dsp.vnle.m2", self.vnle.m2.to_string());
        put("dsp.vnle.m3", self.vnle.m3.to_string());
        let g = &self.grid;
        put("sweep.phi_divisions", g.phi_divisions.to_string());
        put("sweep.delay_max_ps", g.delay_max_ps.to_string());
        put("sweep.delay_step_ps", g.delay_step_ps.to_string());
        put("sweep.delay_refine_ps", g.delay_refine_ps.to_string());
        put("sweep.length_max_km", g.length_max_km.to_string());
        put("sweep.length_step_km", g.length_step_km.to_string());
        put("sweep.distance_rop_dbm", g.distance_rop_dbm.to_string());
        put("sweep.rop_min_dbm", g.rop_min_dbm.to_string());
        put("sweep.rop_max_dbm", g.rop_max_dbm.to_string());
        put("sweep.rop_step_db", g.rop_step_db.to_string());
        put("sweep.rop_length_km", g.rop_length_km.to_string());
        let bauds: Vec<String> = g.bauds.iter().map(|b| b.to_string()).collect();
        put("sweep.bauds", bauds.join(", "));
        put("sweep.oeffe_tau_max_ps", g.oeffe_tau_max_ps.to_string());
        put("sweep.oeffe_tau_step_ps", g.oeffe_tau_step_ps.to_string());
        put("sweep.oeffe_phi_divisions", g.oeffe_phi_divisions.to_string());
        put("sweep.search_symbols", g.search_symbols.to_string());
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Settings::render`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn optical_config(&self, kind: OpticalKind) -> OpticalConfig {
        match kind {
            OpticalKind::None => OpticalConfig::None,
            OpticalKind::DualTap => OpticalConfig::DualTap(self.dual_tap),
            OpticalKind::OeFfe => OpticalConfig::OeFfe(self.oe_ffe),
        }
    }

    pub fn dsp_config(&self, kind: DspKind) -> DspConfig {
        match kind {
            DspKind::Ffe => DspConfig::Ffe(self.ffe.clone()),
            DspKind::Dfe => DspConfig::Dfe(self.dfe.clone()),
            DspKind::Vnle => DspConfig::Vnle(self.vnle.clone()),
        }
    }

    /// Link with the selected optical and DSP variants.
    pub fn link(&self) -> LinkConfig {
        LinkConfig {
            tx: self.tx.clone(),
            fiber: self.fiber.clone(),
            optical: self.optical_config(self.optical),
            rx: self.rx.clone(),
            dsp: self.dsp_config(self.dsp),
            rop_dbm: self.rop_dbm,
            n_symbols: self.n_symbols,
            n_train: self.n_train,
            seed: self.seed,
        }
    }

    /// Reduces the symbol count to smoke scale.
    pub fn smoke(&mut self) {
        self.n_symbols = self.n_symbols.min(SMOKE_SYMBOLS);
        self.grid.search_symbols = self.grid.search_symbols.min(SMOKE_SYMBOLS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_render() {
        let s = Settings::default();
        let parsed = Settings::parse(&s.render()).unwrap();
        assert_eq!(parsed, s);
    }

    #[test]
    fn parses_assignments_and_comments() {
        let text = "# link\nfiber.length_km = 15 # km\n\noptical.kind = dt\noptical.dt.phi = -pi/2\ndsp.kind = vnle\nsweep.bauds = 50e9, 1e11\nseed = 42\n";
        let s = Settings::parse(text).unwrap();
        assert_eq!(s.fiber.length_km, 15.0);
        assert_eq!(s.optical, OpticalKind::DualTap);
        assert!((s.dual_tap.phi + PI / 2.0).abs() < 1e-15);
        assert_eq!(s.dsp, DspKind::Vnle);
        assert_eq!(s.grid.bauds, vec![50e9, 1e11]);
        assert_eq!(s.seed, 42);
        assert!(matches!(s.link().optical, OpticalConfig::DualTap(_)));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Settings::parse("tx.vpp = 0.4\nfiber.lenght_km = 3\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("lenght"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_values_are_rejected() {
        assert!(Settings::parse("tx.sps = 2.5").is_err());
        assert!(Settings::parse("rop_dbm = loud").is_err());
        assert!(Settings::parse("optical.kind = mirror").is_err());
        assert!(Settings::parse("just text").is_err());
    }

    #[test]
    fn pi_expressions() {
        assert_eq!(parse_number("pi").unwrap(), PI);
        assert_eq!(parse_number("-pi").unwrap(), -PI);
        assert!((parse_number("3*pi/4").unwrap() - 0.75 * PI).abs() < 1e-15);
        assert!((parse_number("0.5 * pi").unwrap() - 0.5 * PI).abs() < 1e-15);
        assert!(parse_number("pie").is_err());
    }

    #[test]
    fn fingerprint_ignores_seed_but_tracks_settings() {
        let a = Settings::default();
        let mut b = a.clone();
        b.seed = 99;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.fiber.length_km = 11.0;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn link_validation() {
        let mut link = LinkConfig::default();
        link.validate().unwrap();
        link.rop_dbm = 12.0;
        assert!(link.validate().is_err());
        let mut link = LinkConfig::default();
        link.n_train = link.n_symbols + 1;
        assert!(link.validate().is_err());
    }
}
