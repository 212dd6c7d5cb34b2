//! Sweep experiments over optical, fiber and receiver parameters.
//!
//! Points run on a rayon pool and are collected in grid order, so results do
//! not depend on the worker count.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::analysis::MetricReport;
use crate::config::{DspConfig, DspKind, OpticalConfig, Settings};
use crate::error::{Error, Result};
use crate::link::{derive_seed, finish, prepare, PreparedLink};
use crate::optical::{DtOdfeConfig, OeFfeConfig};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// Values for [`SweepResult::columns`], in order.
    pub axes: Vec<Cell>,
    pub report: MetricReport,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Experiment id used in output file names.
    pub experiment: String,
    /// Names of the descriptive columns preceding the metrics.
    pub columns: Vec<String>,
    pub records: Vec<SweepRecord>,
    pub config_hash: String,
    pub master_seed: u64,
}

impl SweepResult {
    fn new(experiment: &str, columns: &[&str], settings: &Settings) -> Self {
        Self {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            records: Vec::new(),
            config_hash: settings.fingerprint(),
            master_seed: settings.seed,
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Index of the record with the highest SNR (first one on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.records.iter().enumerate() {
            if best.is_none_or(|b| r.report.snr_db > self.records[b].report.snr_db) {
                best = Some(i);
            }
        }
        best
    }

    /// Records whose text column `name` equals `value`.
    pub fn select<'a>(&'a self, name: &str, value: &'a str) -> impl Iterator<Item = &'a SweepRecord> + 'a {
        let idx = self.column(name);
        self.records.iter().filter(move |r| {
            idx.and_then(|i| r.axes[i].as_text()) == Some(value)
        })
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    pool(jobs)?.install(|| items.par_iter().map(f).collect())
}

/// Inclusive grid start, start + step, ... up to `stop` (within rounding).
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return vec![start];
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Phases -pi ..= pi with step pi / divisions.
pub fn phase_grid(divisions: usize) -> Vec<f64> {
    let d = divisions.max(1) as i64;
    (-d..=d).map(|k| k as f64 * PI / d as f64).collect()
}

fn prepared_for(settings: &Settings, seed: u64, n_symbols: usize) -> Result<PreparedLink> {
    prepare(&settings.tx, &settings.fiber, n_symbols, settings.n_train, seed)
}

fn ffe(settings: &Settings) -> DspConfig {
    settings.dsp_config(DspKind::Ffe)
}

/// SNR versus phase shift with the configured delays. All points share the
/// symbol and noise realization of seed index 0.
pub fn sweep_phase(settings: &Settings, phis: &[f64], jobs: usize) -> Result<SweepResult> {
    let seed = derive_seed(settings.seed, 0);
    let prepared = prepared_for(settings, seed, settings.n_symbols)?;
    let dsp = settings.dsp_config(settings.dsp);
    let reports = par_map(jobs, phis, |&phi| {
        let cfg = DtOdfeConfig {
            phi,
            ..settings.dual_tap
        };
        finish(&prepared, &OpticalConfig::DualTap(cfg), settings.rop_dbm, &settings.rx, &dsp)
    })?;
    let mut out = SweepResult::new("sweep-phase", &["phi"], settings);
    out.records = phis
        .iter()
        .zip(reports)
        .map(|(&phi, report)| SweepRecord {
            axes: vec![phi.into()],
            report,
            seed,
        })
        .collect();
    Ok(out)
}

/// SNR over a (tau1, tau2) grid at the configured phase, then an optional
/// local refinement around the grid optimum.
pub fn sweep_delays(
    settings: &Settings,
    tau1s_ps: &[f64],
    tau2s_ps: &[f64],
    jobs: usize,
) -> Result<SweepResult> {
    let seed = derive_seed(settings.seed, 0);
    let prepared = prepared_for(settings, seed, settings.n_symbols)?;
    let dsp = settings.dsp_config(settings.dsp);
    let phi = settings.dual_tap.phi;
    let run = |pts: &[(f64, f64)]| {
        par_map(jobs, pts, |&(t1, t2)| {
            let cfg = OpticalConfig::DualTap(DtOdfeConfig::from_ps(t1, t2, phi));
            finish(&prepared, &cfg, settings.rop_dbm, &settings.rx, &dsp)
        })
    };
    let coarse: Vec<(f64, f64)> = tau1s_ps
        .iter()
        .flat_map(|&a| tau2s_ps.iter().map(move |&b| (a, b)))
        .collect();
    let mut out = SweepResult::new("sweep-delays", &["tau1_ps", "tau2_ps", "stage"], settings);
    for (&(a, b), report) in coarse.iter().zip(run(&coarse)?) {
        out.records.push(SweepRecord {
            axes: vec![a.into(), b.into(), "grid".into()],
            report,
            seed,
        });
    }
    let refine = settings.grid.delay_refine_ps;
    let step = settings.grid.delay_step_ps;
    if refine > 0.0 && refine < step {
        if let Some(best) = out.argmax() {
            let a0 = out.records[best].axes[0].as_num().unwrap_or(0.0);
            let b0 = out.records[best].axes[1].as_num().unwrap_or(0.0);
            let local = |c: f64| -> Vec<f64> {
                grid(c - step + refine, c + step - refine, refine)
                    .into_iter()
                    .filter(|v| *v >= 0.0)
                    .collect()
            };
            let fine: Vec<(f64, f64)> = local(a0)
                .iter()
                .flat_map(|&a| local(b0).into_iter().map(move |b| (a, b)))
                .filter(|p| !coarse.iter().any(|q| (q.0 - p.0).abs() < 1e-9 && (q.1 - p.1).abs() < 1e-9))
                .collect();
            for (&(a, b), report) in fine.iter().zip(run(&fine)?) {
                out.records.push(SweepRecord {
                    axes: vec![a.into(), b.into(), "refine".into()],
                    report,
                    seed,
                });
            }
        }
    }
    Ok(out)
}

/// A receiver variant compared in the distance and ROP sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub optical: OpticalConfig,
    pub dsp: DspConfig,
}

/// FFE, DFE and VNLE alone, and the two dual-tap settings followed by FFE.
pub fn distance_variants(settings: &Settings) -> Vec<Variant> {
    let dt = |a: f64, b: f64| OpticalConfig::DualTap(DtOdfeConfig::from_ps(a, b, PI));
    vec![
        Variant {
            name: "ffe".into(),
            optical: OpticalConfig::None,
            dsp: ffe(settings),
        },
        Variant {
            name: "dfe".into(),
            optical: OpticalConfig::None,
            dsp: settings.dsp_config(DspKind::Dfe),
        },
        Variant {
            name: "vnle".into(),
            optical: OpticalConfig::None,
            dsp: settings.dsp_config(DspKind::Vnle),
        },
        Variant {
            name: "dt14_14".into(),
            optical: dt(14.0, 14.0),
            dsp: ffe(settings),
        },
        Variant {
            name: "dt10_6".into(),
            optical: dt(10.0, 6.0),
            dsp: ffe(settings),
        },
    ]
}

/// The ROP sweep compares FFE alone with both dual-tap settings.
pub fn rop_variants(settings: &Settings) -> Vec<Variant> {
    distance_variants(settings)
        .into_iter()
        .filter(|v| v.name == "ffe" || v.name.starts_with("dt"))
        .collect()
}

/// Runs every variant at every axis point. Variants at one point share the
/// symbol and noise realization derived from the point index.
fn sweep_points<F>(
    settings: &Settings,
    experiment: &str,
    axis: &str,
    values: &[f64],
    variants: &[Variant],
    jobs: usize,
    apply: F,
) -> Result<SweepResult>
where
    F: Fn(&mut Settings, f64) + Sync,
{
    let order: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|i| (0..variants.len()).map(move |v| (i, v)))
        .collect();
    let point_settings: Vec<Settings> = values
        .iter()
        .map(|&v| {
            let mut s = settings.clone();
            apply(&mut s, v);
            s
        })
        .collect();
    let seeds: Vec<u64> = (0..values.len())
        .map(|i| derive_seed(settings.seed, i as u64))
        .collect();
    // Propagation depends on the fiber only: prepare once per point, then
    // fan out over the variants. Only in-flight points hold waveforms.
    let points: Vec<usize> = (0..values.len()).collect();
    let per_point = par_map(jobs, &points, |&i| {
        let s = &point_settings[i];
        let prepared = prepared_for(s, seeds[i], settings.n_symbols)?;
        variants
            .par_iter()
            .map(|var| finish(&prepared, &var.optical, s.rop_dbm, &s.rx, &var.dsp))
            .collect::<Result<Vec<_>>>()
    })?;
    let reports = per_point.into_iter().flatten();
    let mut out = SweepResult::new(experiment, &[axis, "variant"], settings);
    for (&(i, v), report) in order.iter().zip(reports) {
        out.records.push(SweepRecord {
            axes: vec![values[i].into(), variants[v].name.as_str().into()],
            report,
            seed: seeds[i],
        });
    }
    Ok(out)
}

/// SNR versus fiber length at the distance-sweep ROP.
pub fn sweep_distance(
    settings: &Settings,
    lengths_km: &[f64],
    variants: &[Variant],
    jobs: usize,
) -> Result<SweepResult> {
    let rop = settings.grid.distance_rop_dbm;
    sweep_points(settings, "sweep-distance", "length_km", lengths_km, variants, jobs, |s, l| {
        s.fiber.length_km = l;
        s.rop_dbm = rop;
    })
}

/// SNR versus received optical power at the ROP-sweep fiber length.
pub fn sweep_rop(
    settings: &Settings,
    rops_dbm: &[f64],
    variants: &[Variant],
    jobs: usize,
) -> Result<SweepResult> {
    let length = settings.grid.rop_length_km;
    sweep_points(settings, "sweep-rop", "rop_dbm", rops_dbm, variants, jobs, |s, r| {
        s.fiber.length_km = length;
        s.rop_dbm = r;
    })
}

/// Best optical setting found by a search, with its full-scale result.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub optical: OpticalConfig,
    pub report: MetricReport,
}

fn search(
    settings: &Settings,
    seed: u64,
    candidates: &[OpticalConfig],
    jobs: usize,
) -> Result<Optimized> {
    let dsp = ffe(settings);
    let search_n = settings.grid.search_symbols.min(settings.n_symbols).max(settings.n_train + 400);
    let coarse = prepared_for(settings, seed, search_n)?;
    // A candidate that nulls the signal (e.g. OE-FFE at tau = 0, phi = pi)
    // cannot be synchronized; it is skipped rather than failing the search.
    let reports = par_map(jobs, candidates, |c| {
        Ok(finish(&coarse, c, settings.rop_dbm, &settings.rx, &dsp))
    })?;
    let mut best: Option<(usize, &MetricReport)> = None;
    for (i, r) in reports.iter().enumerate() {
        if let Ok(r) = r {
            if best.is_none_or(|(_, b)| r.snr_db > b.snr_db) {
                best = Some((i, r));
            }
        }
    }
    let Some((best, coarse_report)) = best else {
        let first = reports.into_iter().find_map(|r| r.err());
        return Err(first.unwrap_or_else(|| Error::invalid("no search candidates")));
    };
    let optical = candidates[best].clone();
    let report = if search_n == settings.n_symbols {
        coarse_report.clone()
    } else {
        let full = prepared_for(settings, seed, settings.n_symbols)?;
        finish(&full, &optical, settings.rop_dbm, &settings.rx, &dsp)?
    };
    Ok(Optimized { optical, report })
}

/// Dual-tap delay grid at phase pi.
pub fn dual_tap_candidates(settings: &Settings) -> Vec<OpticalConfig> {
    let g = &settings.grid;
    let taus = grid(0.0, g.delay_max_ps, g.delay_step_ps);
    taus.iter()
        .flat_map(|&a| {
            taus.iter()
                .map(move |&b| OpticalConfig::DualTap(DtOdfeConfig::from_ps(a, b, PI)))
        })
        .collect()
}

/// OE-FFE (tau, phi) grid; phi spans [-pi, pi) since -pi and pi coincide.
pub fn oe_ffe_candidates(settings: &Settings) -> Vec<OpticalConfig> {
    let g = &settings.grid;
    let taus = grid(0.0, g.oeffe_tau_max_ps, g.oeffe_tau_step_ps);
    let mut phis = phase_grid(g.oeffe_phi_divisions);
    phis.pop();
    taus.iter()
        .flat_map(|&t| {
            phis.iter()
                .map(move |&p| OpticalConfig::OeFfe(OeFfeConfig::from_ps(t, p)))
        })
        .collect()
}

fn coefficient_cells(optical: &OpticalConfig) -> [Cell; 3] {
    match optical {
        OpticalConfig::None => [Cell::Empty, Cell::Empty, Cell::Empty],
        OpticalConfig::DualTap(c) => [
            (c.tau1 * 1e12).into(),
            (c.tau2 * 1e12).into(),
            c.phi.into(),
        ],
        OpticalConfig::OeFfe(c) => [(c.tau * 1e12).into(), Cell::Empty, c.phi.into()],
    }
}

/// DT-ODFE and OE-FFE, each with coefficients optimized per (baud, length)
/// and followed by the FFE, at the distance-sweep ROP.
pub fn compare_oeffe(
    settings: &Settings,
    lengths_km: &[f64],
    bauds: &[f64],
    jobs: usize,
) -> Result<SweepResult> {
    let mut out = SweepResult::new(
        "compare-oeffe",
        &["baud", "length_km", "scheme", "tau1_ps", "tau2_ps", "phi"],
        settings,
    );
    let dt = dual_tap_candidates(settings);
    let oe = oe_ffe_candidates(settings);
    let mut index = 0u64;
    for &baud in bauds {
        for &length in lengths_km {
            let mut s = settings.clone();
            s.tx.baud = baud;
            s.fiber.length_km = length;
            s.rop_dbm = settings.grid.distance_rop_dbm;
            let seed = derive_seed(settings.seed, index);
            index += 1;
            for (name, candidates) in [("dt-odfe", &dt), ("oe-ffe", &oe)] {
                let best = search(&s, seed, candidates, jobs)?;
                let [a, b, c] = coefficient_cells(&best.optical);
                out.records.push(SweepRecord {
                    axes: vec![baud.into(), length.into(), name.into(), a, b, c],
                    report: best.report,
                    seed,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Settings {
        let mut s = Settings::default();
        s.n_symbols = 3_000;
        s.n_train = 1_000;
        s.tx.sps = 8;
        s.rx.lpf_cutoff_frac = 1.0;
        s.grid.search_symbols = 2_000;
        s
    }

    #[test]
    fn grids() {
        assert_eq!(grid(0.0, 20.0, 2.0).len(), 11);
        assert_eq!(grid(-10.0, 0.0, 1.0).len(), 11);
        let p = phase_grid(16);
        assert_eq!(p.len(), 33);
        assert_eq!(p[0], -PI);
        assert_eq!(p[32], PI);
        assert_eq!(p[16], 0.0);
    }

    #[test]
    fn single_point_phase_sweep_equals_run_link() {
        let mut s = tiny();
        s.optical = crate::config::OpticalKind::DualTap;
        let r = sweep_phase(&s, &[PI], 2).unwrap();
        assert_eq!(r.records.len(), 1);
        let link = s.link().with_seed(derive_seed(s.seed, 0));
        assert_eq!(r.records[0].report, crate::link::run_link(&link).unwrap());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = tiny();
        let v = rop_variants(&s);
        let a = sweep_rop(&s, &[-8.0, -4.0], &v, 1).unwrap();
        let b = sweep_rop(&s, &[-8.0, -4.0], &v, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 6);
    }

    #[test]
    fn removing_a_point_keeps_the_others() {
        let s = tiny();
        let v = rop_variants(&s);
        let all = sweep_distance(&s, &[2.0, 4.0], &v, 1).unwrap();
        let first = sweep_distance(&s, &[2.0], &v, 1).unwrap();
        assert_eq!(&all.records[..3], &first.records[..]);
    }

    #[test]
    fn oe_ffe_grid_skips_duplicate_phase() {
        let s = Settings::default();
        let c = oe_ffe_candidates(&s);
        assert_eq!(c.len(), 11 * 16);
        assert_eq!(dual_tap_candidates(&s).len(), 121);
    }
}
