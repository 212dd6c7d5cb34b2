//! Analytic figure data: channel responses, notches and zero maps.

use num_complex::Complex64;

use crate::analysis::{
    analytic_response, baseline_response, find_notches, first_positive_notch, linear_grid,
    pi_phase_response, symbol_spaced_zeros, zero_phase_response, ZeroMap, DEFAULT_NOTCH_FLOOR_DB,
};
use crate::config::Settings;
use crate::emit::{zero_rows, Table};
use crate::error::Result;
use crate::fiber::FiberConfig;
use crate::signal::ChannelResponse;

const GHZ: f64 = 1e9;

/// Taps of the FIR fitted for zero maps.
pub const ZERO_MAP_TAPS: usize = 32;

/// Frequency grid for response curves: +-60 GHz in 10 MHz steps.
pub fn response_grid() -> Vec<f64> {
    linear_grid(-60.0 * GHZ, 60.0 * GHZ, 0.01 * GHZ)
}

/// Commonly quoted first-notch frequencies of the phi = pi and phi = 0
/// closed forms with 14 ps delays. Both correspond to a 15 km link.
pub const QUOTED_PI_NOTCH_HZ: f64 = 38.9e9;
pub const QUOTED_ZERO_NOTCH_HZ: f64 = 18.6e9;

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseReport {
    pub table: Table,
    /// Positive-frequency baseline notches, ascending (Hz).
    pub baseline_notches: Vec<f64>,
    /// Positive-frequency notches of the configured dual-tap response (Hz).
    pub dual_tap_notches: Vec<f64>,
    pub pi_form_notch: Option<f64>,
    pub zero_form_notch: Option<f64>,
    /// First phi = pi and phi = 0 notches at 15 km, where the quoted values hold.
    pub pi_form_notch_15km: Option<f64>,
    pub zero_form_notch_15km: Option<f64>,
}

fn positive(h: &ChannelResponse) -> Vec<f64> {
    find_notches(h, DEFAULT_NOTCH_FLOOR_DB)
        .into_iter()
        .filter(|&f| f > 0.0)
        .collect()
}

fn db(v: Complex64, scale: f64) -> f64 {
    20.0 * (v.norm() / scale).max(1e-12).log10()
}

/// Baseline, configured dual-tap, and phi = pi / phi = 0 closed-form responses
/// on [`response_grid`], normalized to 0 dB for a flat channel.
pub fn response_report(settings: &Settings) -> Result<ResponseReport> {
    let f = response_grid();
    let fiber = &settings.fiber;
    let dt = settings.dual_tap;
    let base = baseline_response(&f, fiber)?;
    let full = analytic_response(&f, fiber, &dt)?;
    let pi_form = pi_phase_response(&f, fiber, dt.tau1, dt.tau2)?;
    let zero_form = zero_phase_response(&f, fiber, dt.tau1, dt.tau2)?;
    let mut table = Table::new(
        "response",
        &["freq_ghz", "baseline_db", "dual_tap_db", "pi_form_db", "zero_form_db"],
    );
    for i in 0..f.len() {
        table.rows.push(vec![
            (f[i] / GHZ).into(),
            db(base.values()[i], 1.0).into(),
            db(full.values()[i], 4.0).into(),
            db(pi_form.values()[i], 4.0).into(),
            db(zero_form.values()[i], 4.0).into(),
        ]);
    }
    let at_15 = FiberConfig {
        length_km: 15.0,
        ..fiber.clone()
    };
    let pi_15 = pi_phase_response(&f, &at_15, dt.tau1, dt.tau2)?;
    let zero_15 = zero_phase_response(&f, &at_15, dt.tau1, dt.tau2)?;
    Ok(ResponseReport {
        table,
        baseline_notches: positive(&base),
        dual_tap_notches: positive(&full),
        pi_form_notch: first_positive_notch(&pi_form, DEFAULT_NOTCH_FLOOR_DB),
        zero_form_notch: first_positive_notch(&zero_form, DEFAULT_NOTCH_FLOOR_DB),
        pi_form_notch_15km: first_positive_notch(&pi_15, DEFAULT_NOTCH_FLOOR_DB),
        zero_form_notch_15km: first_positive_notch(&zero_15, DEFAULT_NOTCH_FLOOR_DB),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroReport {
    pub table: Table,
    pub tap_rate: f64,
    pub baseline: ZeroMap,
    pub dual_tap: ZeroMap,
}

/// Zero maps of the baseline and dual-tap channels, fitted at twice the baud.
pub fn zero_report(settings: &Settings) -> Result<ZeroReport> {
    let f = response_grid();
    let rate = 2.0 * settings.tx.baud;
    let baseline = symbol_spaced_zeros(&baseline_response(&f, &settings.fiber)?, rate, ZERO_MAP_TAPS)?;
    let dt = analytic_response(&f, &settings.fiber, &settings.dual_tap)?;
    let dual_tap = symbol_spaced_zeros(&dt, rate, ZERO_MAP_TAPS)?;
    let mut table = Table::new("zeros", &["map", "re", "im", "radius", "angle_rad"]);
    zero_rows(&mut table, "baseline", &baseline);
    zero_rows(&mut table, "dual_tap", &dual_tap);
    Ok(ZeroReport {
        table,
        tap_rate: rate,
        baseline,
        dual_tap,
    })
}

/// Distance from the nearest near-unit-circle zero to z = -1.
pub fn distance_to_nyquist(map: &ZeroMap, tol: f64) -> Option<f64> {
    map.closest_to(Complex64::new(-1.0, 0.0), tol)
}
