//! Linear fiber: chromatic dispersion as an all-pass quadratic phase.
//!
//! Loss is not modeled here; received power is set by the VOA stage.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{apply_response, ChannelResponse, ComplexWaveform};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FiberConfig {
    pub length_km: f64,
    /// Dispersion coefficient D in ps/(nm km).
    pub dispersion: f64,
    pub wavelength_nm: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self {
            length_km: 10.0,
            dispersion: 7.0,
            wavelength_nm: 1371.0,
        }
    }
}

impl FiberConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(Error::invalid(format!("fiber length {} km", self.length_km)));
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(Error::invalid(format!("wavelength {} nm", self.wavelength_nm)));
        }
        if !self.dispersion.is_finite() {
            return Err(Error::invalid("dispersion must be finite"));
        }
        Ok(())
    }

    /// Accumulated GVD beta2 * L in s^2.
    pub fn accumulated_beta2(&self) -> f64 {
        beta2(self.dispersion, self.wavelength_nm) * 1e-24 * self.length_km
    }

    /// CD phase theta = omega^2 beta2 L / 2 at angular frequency `omega`.
    pub fn phase(&self, omega: f64) -> f64 {
        omega * omega * self.accumulated_beta2() / 2.0
    }
}

/// GVD parameter in ps^2/km from D in ps/(nm km) and wavelength in nm.
pub fn beta2(dispersion: f64, wavelength_nm: f64) -> f64 {
    // c in nm/ps
    let c = SPEED_OF_LIGHT * 1e9 * 1e-12;
    -dispersion * wavelength_nm * wavelength_nm / (2.0 * std::f64::consts::PI * c)
}

/// exp(j theta(omega)) on the given angular-frequency grid (rad/s).
pub fn cd_transfer(omega: &[f64], cfg: &FiberConfig) -> Result<ChannelResponse> {
    cfg.validate()?;
    let freqs = omega
        .iter()
        .map(|w| w / (2.0 * std::f64::consts::PI))
        .collect();
    let values = omega
        .iter()
        .map(|&w| Complex64::from_polar(1.0, cfg.phase(w)))
        .collect();
    ChannelResponse::new(freqs, values)
}

/// Propagates the envelope through the dispersive fiber.
pub fn propagate(w: &ComplexWaveform, cfg: &FiberConfig) -> Result<ComplexWaveform> {
    cfg.validate()?;
    if (w.wavelength_nm() - cfg.wavelength_nm).abs() > 1e-9 * cfg.wavelength_nm {
        return Err(Error::invalid(format!(
            "field at {} nm launched into fiber configured for {} nm",
            w.wavelength_nm(),
            cfg.wavelength_nm
        )));
    }
    if cfg.length_km == 0.0 {
        if w.is_empty() {
            return Err(Error::invalid("cannot propagate an empty waveform"));
        }
        return Ok(w.clone());
    }
    apply_response(w, |omega| Complex64::from_polar(1.0, cfg.phase(omega)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fiber(length_km: f64) -> FiberConfig {
        FiberConfig {
            length_km,
            ..FiberConfig::default()
        }
    }

    #[test]
    fn beta2_values() {
        assert_eq!(beta2(0.0, 1371.0), 0.0);
        let b = beta2(7.0, 1371.0);
        assert!((b + 6.99).abs() < 0.01, "{b}");
        assert!(beta2(17.0, 1550.0) < 0.0);
        assert!(beta2(-3.0, 1310.0) > 0.0);
    }

    #[test]
    fn cd_transfer_phase() {
        let om = [0.0, 2.0 * PI * 33.75e9];
        let h = cd_transfer(&om, &fiber(0.0)).unwrap();
        assert!(h.values().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let h = cd_transfer(&om, &fiber(10.0)).unwrap();
        let theta = h.values()[1].arg();
        assert!((theta + PI / 2.0).abs() < 0.02, "{theta}");

        // Linear in L, quadratic in omega.
        let cfg = fiber(10.0);
        let w = 2.0 * PI * 5e9;
        assert!((fiber(20.0).phase(w) - 2.0 * cfg.phase(w)).abs() < 1e-12);
        assert!((cfg.phase(2.0 * w) - 4.0 * cfg.phase(w)).abs() < 1e-12);
    }

    #[test]
    fn propagate_rejects_wavelength_mismatch() {
        let w = ComplexWaveform::new(vec![Complex64::new(1.0, 0.0); 16], 1e12, 1550.0).unwrap();
        assert!(propagate(&w, &fiber(1.0)).is_err());
    }

    #[test]
    fn zero_length_is_identity() {
        let w = ComplexWaveform::new(
            (0..32).map(|i| Complex64::new(i as f64, -1.0)).collect(),
            1e12,
            1371.0,
        )
        .unwrap();
        assert_eq!(propagate(&w, &fiber(0.0)).unwrap(), w);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field(seed: u64) -> ComplexWaveform {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = (0..256)
                .map(|_| Complex64::new(rng.random::<f64>(), rng.random::<f64>() - 0.5))
                .collect();
            ComplexWaveform::new(s, 1.6e12, 1371.0).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn unit_modulus_on_any_grid(f in proptest::collection::vec(-2e11..2e11f64, 1..40), l in 0.0..40.0f64) {
                let mut om: Vec<f64> = f.iter().map(|x| 2.0 * PI * x).collect();
                om.sort_by(f64::total_cmp);
                om.dedup();
                let h = cd_transfer(&om, &fiber(l)).unwrap();
                for v in h.values() {
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn energy_conserved_and_semigroup(seed in 0u64..500, l1 in 0.0..20.0f64, l2 in 0.0..20.0f64) {
                let w = field(seed);
                let a = propagate(&w, &fiber(l1)).unwrap();
                prop_assert!((a.energy() - w.energy()).abs() <= 1e-9 * w.energy());
                let ab = propagate(&a, &fiber(l2)).unwrap();
                let direct = propagate(&w, &fiber(l1 + l2)).unwrap();
                let scale = w.energy().sqrt();
                for (x, y) in ab.samples().iter().zip(direct.samples()) {
                    prop_assert!((x - y).norm() <= 1e-9 * scale);
                }
            }
        }
    }
}
