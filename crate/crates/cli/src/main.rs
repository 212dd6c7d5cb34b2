use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use imdd_core::analysis::MetricReport;
use imdd_core::emit::{emit_results, emit_table, file_stem, write_file, zero_plot, line_plot, Series};
use imdd_core::figures::{distance_to_nyquist, response_report, zero_report, QUOTED_PI_NOTCH_HZ, QUOTED_ZERO_NOTCH_HZ};
use imdd_core::sweep::{
    compare_oeffe, distance_variants, grid, phase_grid, rop_variants, sweep_delays,
    sweep_distance, sweep_phase, sweep_rop, SweepRecord, SweepResult,
};
use imdd_core::{run_link, Settings};

/// IM/DD link simulator: channel responses, single runs and sweep experiments.
#[derive(Debug, Parser)]
#[command(name = "imdd-sim", version)]
struct Cli {
    /// Settings file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the settings file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Reduced symbol counts for a quick run.
    #[arg(long, global = true)]
    smoke: bool,
    /// Extra setting applied after the file, e.g. `--set fiber.length_km=15`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Analytic channel responses and their notches.
    Response,
    /// Zero maps of symbol-spaced channel fits.
    Zeros,
    /// One end-to-end link run with the configured variants.
    Run,
    /// SNR versus dual-tap phase shift.
    SweepPhase,
    /// SNR over the dual-tap delay grid.
    SweepDelays,
    /// SNR versus fiber length for every equalizer variant.
    SweepDistance,
    /// SNR versus received optical power.
    SweepRop,
    /// Dual-tap versus OE-FFE, each optimized per point, over length and baud.
    CompareOeffe,
    /// Every experiment above except `run`.
    AllFigures,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Response => "response",
            Command::Zeros => "zeros",
            Command::Run => "run",
            Command::SweepPhase => "sweep-phase",
            Command::SweepDelays => "sweep-delays",
            Command::SweepDistance => "sweep-distance",
            Command::SweepRop => "sweep-rop",
            Command::CompareOeffe => "compare-oeffe",
            Command::AllFigures => "all-figures",
        }
    }
}

struct Ctx {
    settings: Settings,
    out: PathBuf,
    jobs: usize,
    svg: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        settings
            .set(k.trim(), v.trim())
            .map_err(|msg| anyhow::anyhow!("--set {kv}: {msg}"))?;
    }
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    if cli.smoke {
        settings.smoke();
    }
    settings.link().validate().context("invalid settings")?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let ctx = Ctx {
        settings,
        out: cli.out.clone(),
        jobs,
        svg: cli.svg,
    };

    let started = Instant::now();
    let commands: Vec<Command> = match cli.command {
        Command::AllFigures => vec![
            Command::Response,
            Command::Zeros,
            Command::SweepPhase,
            Command::SweepDelays,
            Command::SweepDistance,
            Command::SweepRop,
            Command::CompareOeffe,
        ],
        c => vec![c],
    };
    let mut outputs = Vec::new();
    for c in commands {
        let t = Instant::now();
        outputs.extend(execute(c, &ctx).with_context(|| format!("{} failed", c.name()))?);
        eprintln!("{}: done in {:.1} s", c.name(), t.elapsed().as_secs_f64());
    }
    let manifest = write_manifest(&ctx, &cli, &outputs)?;
    eprintln!(
        "wrote {} files and {} in {:.1} s",
        outputs.len(),
        manifest.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn execute(c: Command, ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let s = &ctx.settings;
    let g = &s.grid;
    match c {
        Command::Response => response(ctx),
        Command::Zeros => zeros(ctx),
        Command::Run => run(ctx),
        Command::SweepPhase => {
            let r = sweep_phase(s, &phase_grid(g.phi_divisions), ctx.jobs)?;
            if let Some(i) = r.argmax() {
                let phi = r.records[i].axes[0].as_num().unwrap_or(f64::NAN);
                println!("phase sweep: best phi = {:.4} pi rad at {:.2} dB", phi / std::f64::consts::PI, r.records[i].report.snr_db);
            }
            emit(ctx, &r)
        }
        Command::SweepDelays => {
            let taus = grid(0.0, g.delay_max_ps, g.delay_step_ps);
            let r = sweep_delays(s, &taus, &taus, ctx.jobs)?;
            if let Some(i) = r.argmax() {
                let a = &r.records[i].axes;
                let origin = r.records.iter().find(|x| x.axes[0].as_num() == Some(0.0) && x.axes[1].as_num() == Some(0.0));
                println!(
                    "delay sweep: best (tau1, tau2) = ({}, {}) ps at {:.2} dB{}",
                    a[0].as_num().unwrap_or(f64::NAN),
                    a[1].as_num().unwrap_or(f64::NAN),
                    r.records[i].report.snr_db,
                    origin.map_or(String::new(), |o| format!(", {:.2} dB above (0, 0)", r.records[i].report.snr_db - o.report.snr_db))
                );
            }
            emit(ctx, &r)
        }
        Command::SweepDistance => {
            let lengths = grid(0.0, g.length_max_km, g.length_step_km);
            let r = sweep_distance(s, &lengths, &distance_variants(s), ctx.jobs)?;
            print_table(&r, "length_km");
            emit(ctx, &r)
        }
        Command::SweepRop => {
            let rops = grid(g.rop_min_dbm, g.rop_max_dbm, g.rop_step_db);
            let r = sweep_rop(s, &rops, &rop_variants(s), ctx.jobs)?;
            print_table(&r, "rop_dbm");
            emit(ctx, &r)
        }
        Command::CompareOeffe => {
            let lengths = grid(0.0, g.length_max_km, g.length_step_km);
            let r = compare_oeffe(s, &lengths, &g.bauds, ctx.jobs)?;
            for rec in &r.records {
                println!(
                    "{:>5} GBd {:>4} km {:<8} {:6.2} dB fec {}",
                    rec.axes[0].as_num().unwrap_or(0.0) / 1e9,
                    rec.axes[1].as_num().unwrap_or(0.0),
                    rec.axes[2].as_text().unwrap_or(""),
                    rec.report.snr_db,
                    pass(&rec.report)
                );
            }
            emit(ctx, &r)
        }
        Command::AllFigures => unreachable!("expanded by the caller"),
    }
}

fn pass(r: &MetricReport) -> &'static str {
    if r.fec_pass {
        "pass"
    } else {
        "fail"
    }
}

fn emit(ctx: &Ctx, r: &SweepResult) -> Result<Vec<PathBuf>> {
    Ok(emit_results(r, &ctx.out, ctx.svg)?)
}

/// One line per axis value with every variant's SNR.
fn print_table(r: &SweepResult, axis: &str) {
    let mut line = String::new();
    let mut current: Option<f64> = None;
    for rec in &r.records {
        let x = rec.axes[0].as_num();
        if x != current {
            if !line.is_empty() {
                println!("{line}");
            }
            line = format!("{axis} {:>5}:", x.unwrap_or(f64::NAN));
            current = x;
        }
        let _ = write!(
            line,
            " {} {:.2}{}",
            rec.axes[1].as_text().unwrap_or(""),
            rec.report.snr_db,
            if rec.report.fec_pass { "" } else { "*" }
        );
    }
    if !line.is_empty() {
        println!("{line}");
    }
    println!("(* = above the FEC BER limit)");
}

fn ghz(f: Option<f64>) -> String {
    f.map_or("none".into(), |v| format!("{:.2} GHz", v / 1e9))
}

fn response(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let s = &ctx.settings;
    let r = response_report(s)?;
    let list = |v: &[f64]| v.iter().map(|f| format!("{:.2}", f / 1e9)).collect::<Vec<_>>().join(", ");
    println!("baseline notches ({} km): [{}] GHz", s.fiber.length_km, list(&r.baseline_notches));
    println!(
        "dual-tap notches (tau1 {} ps, tau2 {} ps, phi {:.4} rad): [{}] GHz",
        s.dual_tap.tau1 * 1e12,
        s.dual_tap.tau2 * 1e12,
        s.dual_tap.phi,
        list(&r.dual_tap_notches)
    );
    println!("phi = pi closed form, first notch: {}", ghz(r.pi_form_notch));
    println!("phi = 0 closed form, first notch: {}", ghz(r.zero_form_notch));
    println!(
        "at 15 km: phi = pi first notch {}, phi = 0 first notch {}",
        ghz(r.pi_form_notch_15km),
        ghz(r.zero_form_notch_15km)
    );
    if let Some(f) = r.pi_form_notch {
        if (f - QUOTED_PI_NOTCH_HZ).abs() > 0.5e9 {
            println!(
                "note: the phi = pi notch is often quoted as {:.1} GHz (and {:.1} GHz at phi = 0); those values hold at 15 km, not at {} km ({})",
                QUOTED_PI_NOTCH_HZ / 1e9,
                QUOTED_ZERO_NOTCH_HZ / 1e9,
                s.fiber.length_km,
                ghz(Some(f))
            );
        }
    }
    let mut paths = vec![emit_table(&r.table, s.seed, &ctx.out)?];
    if ctx.svg {
        let col = |k: usize| -> Vec<(f64, f64)> {
            r.table
                .rows
                .iter()
                .filter_map(|row| Some((row[0].as_num()?, row[k].as_num()?.max(-60.0))))
                .filter(|p| p.0 >= 0.0)
                .step_by(5)
                .collect()
        };
        let series = [
            Series { name: "baseline".into(), points: col(1) },
            Series { name: "dual tap".into(), points: col(2) },
        ];
        let svg = line_plot(&format!("channel response, {} km", s.fiber.length_km), "frequency (GHz)", "|H| (dB)", &series);
        let stem = file_stem("response", s.seed);
        paths.push(write_file(&ctx.out.join(format!("{stem}.svg")), &svg)?);
    }
    Ok(paths)
}

fn zeros(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let s = &ctx.settings;
    let z = zero_report(s)?;
    for (name, map) in [("baseline", &z.baseline), ("dual tap", &z.dual_tap)] {
        println!(
            "{name}: {} finite zeros ({} at infinity), {} within 0.01 of the unit circle, closest to z = -1 at {}",
            map.zeros.len(),
            map.at_infinity,
            map.near_unit_circle(0.01).len(),
            distance_to_nyquist(map, 0.01).map_or("n/a".into(), |d| format!("{d:.4}"))
        );
    }
    let mut paths = vec![emit_table(&z.table, s.seed, &ctx.out)?];
    if ctx.svg {
        let svg = zero_plot(
            &format!("zeros at {} GS/s, {} km", z.tap_rate / 1e9, s.fiber.length_km),
            &[("baseline", &z.baseline), ("dual tap", &z.dual_tap)],
        );
        let stem = file_stem("zeros", s.seed);
        paths.push(write_file(&ctx.out.join(format!("{stem}.svg")), &svg)?);
    }
    Ok(paths)
}

fn run(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let s = &ctx.settings;
    let link = s.link();
    let report = run_link(&link)?;
    println!(
        "SNR {:.2} dB, BER {:.3e} ({} errors in {} bits), FEC {}",
        report.snr_db,
        report.ber,
        report.n_errors,
        report.n_bits,
        pass(&report)
    );
    let optical = match s.optical {
        imdd_core::config::OpticalKind::None => "none",
        imdd_core::config::OpticalKind::DualTap => "dt",
        imdd_core::config::OpticalKind::OeFfe => "oeffe",
    };
    let dsp = match s.dsp {
        imdd_core::config::DspKind::Ffe => "ffe",
        imdd_core::config::DspKind::Dfe => "dfe",
        imdd_core::config::DspKind::Vnle => "vnle",
    };
    let r = SweepResult {
        experiment: "run".into(),
        columns: vec!["length_km".into(), "rop_dbm".into(), "optical".into(), "dsp".into()],
        records: vec![SweepRecord {
            axes: vec![s.fiber.length_km.into(), s.rop_dbm.into(), optical.into(), dsp.into()],
            report,
            seed: link.seed,
        }],
        config_hash: s.fingerprint(),
        master_seed: s.seed,
    };
    Ok(emit_results(&r, &ctx.out, false)?)
}

fn write_manifest(ctx: &Ctx, cli: &Cli, outputs: &[PathBuf]) -> Result<PathBuf> {
    let s = &ctx.settings;
    let mut m = String::new();
    let _ = writeln!(m, "# tool: imdd-sim {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "# command: {}", cli.command.name());
    let _ = writeln!(
        m,
        "# config file: {}",
        cli.config.as_deref().map_or("(defaults)".into(), |p: &Path| p.display().to_string())
    );
    for o in &cli.overrides {
        let _ = writeln!(m, "# override: {o}");
    }
    let _ = writeln!(m, "# jobs: {}", ctx.jobs);
    let _ = writeln!(m, "# smoke: {}", cli.smoke);
    let _ = writeln!(m, "# config hash: {}", s.fingerprint());
    for o in outputs {
        let _ = writeln!(m, "# output: {}", o.display());
    }
    let _ = writeln!(m, "# resolved settings follow; this file can be passed back via --config");
    let _ = writeln!(m, "seed = {}", s.seed);
    m.push_str(&s.render());
    let path = ctx
        .out
        .join(format!("run-manifest_{}_seed{}.txt", cli.command.name(), s.seed));
    Ok(write_file(&path, &m)?)
}
