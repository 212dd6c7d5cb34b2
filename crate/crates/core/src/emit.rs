//! CSV and SVG output.
//!
//! CSV layout: named axis columns, then `snr_db,ber,n_bits,fec_pass,seed,config_hash`.
//! Floats carry 6 significant digits, lines end in LF.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::analysis::ZeroMap;
use crate::error::{Error, Result};
use crate::sweep::{Cell, SweepResult};

pub const METRIC_COLUMNS: [&str; 6] = ["snr_db", "ber", "n_bits", "fec_pass", "seed", "config_hash"];

/// Formats `v` with 6 significant digits, dropping trailing zeros.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.into() }
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Num(v) => format_float(*v),
        Cell::Text(t) => t.clone(),
        Cell::Empty => String::new(),
    }
}

/// CSV text of a sweep.
pub fn sweep_csv(r: &SweepResult) -> String {
    let mut out = String::new();
    let header: Vec<&str> = r
        .columns
        .iter()
        .map(String::as_str)
        .chain(METRIC_COLUMNS)
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for rec in &r.records {
        let mut row: Vec<String> = rec.axes.iter().map(cell_text).collect();
        row.push(format_float(rec.report.snr_db));
        row.push(format_float(rec.report.ber));
        row.push(rec.report.n_bits.to_string());
        row.push(rec.report.fec_pass.to_string());
        row.push(rec.seed.to_string());
        row.push(r.config_hash.clone());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A plain table for analytic outputs (responses, zero maps).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        Self {
            experiment: experiment.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(cell_text).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn file_stem(experiment: &str, seed: u64) -> String {
    format!("{experiment}_seed{seed}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes the sweep CSV and, if requested, its plot. Returns the written paths.
pub fn emit_results(r: &SweepResult, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let stem = file_stem(&r.experiment, r.master_seed);
    let mut paths = vec![write_file(&out_dir.join(format!("{stem}.csv")), &sweep_csv(r))?];
    if svg {
        if let Some(plot) = sweep_plot(r) {
            paths.push(write_file(&out_dir.join(format!("{stem}.svg")), &plot)?);
        }
    }
    Ok(paths)
}

pub fn emit_table(t: &Table, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    let stem = file_stem(&t.experiment, seed);
    write_file(&out_dir.join(format!("{stem}.csv")), &t.csv())
}

fn num(r: &SweepResult, rec: usize, col: &str) -> Option<f64> {
    r.column(col).and_then(|i| r.records[rec].axes[i].as_num())
}

fn text<'a>(r: &'a SweepResult, rec: usize, col: &str) -> Option<&'a str> {
    r.column(col).and_then(|i| r.records[rec].axes[i].as_text())
}

/// Series keyed by a text column, ordered by first appearance.
fn series_by(r: &SweepResult, x_col: &str, key: impl Fn(usize) -> String) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for i in 0..r.records.len() {
        let Some(x) = num(r, i, x_col) else { continue };
        let k = key(i);
        let y = r.records[i].report.snr_db;
        match out.iter_mut().find(|s| s.name == k) {
            Some(s) => s.points.push((x, y)),
            None => out.push(Series {
                name: k,
                points: vec![(x, y)],
            }),
        }
    }
    out
}

/// Default plot for a sweep experiment; `None` for an empty sweep.
pub fn sweep_plot(r: &SweepResult) -> Option<String> {
    if r.records.is_empty() {
        return None;
    }
    let title = format!("{} (seed {})", r.experiment, r.master_seed);
    match r.experiment.as_str() {
        "sweep-delays" => Some(delay_heatmap(r, &title)),
        "sweep-phase" => {
            let s = series_by(r, "phi", |_| "snr".into());
            Some(line_plot(&title, "phase shift (rad)", "SNR (dB)", &s))
        }
        "sweep-distance" => {
            let s = series_by(r, "length_km", |i| text(r, i, "variant").unwrap_or("").into());
            Some(line_plot(&title, "fiber length (km)", "SNR (dB)", &s))
        }
        "sweep-rop" => {
            let s = series_by(r, "rop_dbm", |i| text(r, i, "variant").unwrap_or("").into());
            Some(line_plot(&title, "ROP (dBm)", "SNR (dB)", &s))
        }
        "compare-oeffe" => {
            let s = series_by(r, "length_km", |i| {
                let gbd = num(r, i, "baud").unwrap_or(0.0) / 1e9;
                format!("{} {} GBd", text(r, i, "scheme").unwrap_or(""), format_float(gbd))
            });
            Some(line_plot(&title, "fiber length (km)", "SNR (dB)", &s))
        }
        _ => {
            let x = r.columns.first()?;
            let s = series_by(r, x, |_| "snr".into());
            Some(line_plot(&title, x, "SNR (dB)", &s))
        }
    }
}

fn delay_heatmap(r: &SweepResult, title: &str) -> String {
    let mut cells = Vec::new();
    for i in 0..r.records.len() {
        if text(r, i, "stage").is_some_and(|s| s != "grid") {
            continue;
        }
        if let (Some(a), Some(b)) = (num(r, i, "tau1_ps"), num(r, i, "tau2_ps")) {
            cells.push((a, b, r.records[i].report.snr_db));
        }
    }
    let marker = r
        .argmax()
        .and_then(|i| Some((num(r, i, "tau1_ps")?, num(r, i, "tau2_ps")?)));
    heatmap(title, "tau1 (ps)", "tau2 (ps)", &cells, marker)
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, s: &mut String, x_label: &str, y_label: &str) {
        let (x0, x1) = (LEFT, W - RIGHT);
        let (y0, y1) = (H - BOTTOM, TOP);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for k in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * k as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * k as f64 / 4.0;
            let (px, py) = (self.px(fx), self.py(fy));
            let _ = writeln!(
                s,
                r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                format_float((fx * 1e3).round() / 1e3)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                format_float((fy * 1e3).round() / 1e3)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }
}

/// Line plot with a legend on the right.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let frame = Frame {
        x: extent(pts().map(|p| p.0)),
        y: extent(pts().map(|p| p.1)),
    };
    let mut s = header(title);
    frame.axes(&mut s, x_label, y_label);
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in &path {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
        let ly = TOP + 16.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn color_ramp(t: f64) -> String {
    // dark blue -> yellow
    let t = t.clamp(0.0, 1.0);
    let r = (30.0 + 225.0 * t) as u8;
    let g = (40.0 + 200.0 * t) as u8;
    let b = (120.0 - 90.0 * t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn unique_sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut u: Vec<f64> = v.collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

/// Heatmap of (x, y, value) cells on a rectangular grid with an optional marker.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    cells: &[(f64, f64, f64)],
    marker: Option<(f64, f64)>,
) -> String {
    let xs = unique_sorted(cells.iter().map(|c| c.0));
    let ys = unique_sorted(cells.iter().map(|c| c.1));
    let half = |v: &[f64]| {
        if v.len() > 1 {
            (v[1] - v[0]) / 2.0
        } else {
            0.5
        }
    };
    let (hx, hy) = (half(&xs), half(&ys));
    let frame = Frame {
        x: (xs.first().copied().unwrap_or(0.0) - hx, xs.last().copied().unwrap_or(1.0) + hx),
        y: (ys.first().copied().unwrap_or(0.0) - hy, ys.last().copied().unwrap_or(1.0) + hy),
    };
    let (lo, hi) = extent(cells.iter().map(|c| c.2));
    let mut s = header(title);
    for &(x, y, v) in cells {
        let (x0, x1) = (frame.px(x - hx), frame.px(x + hx));
        let (y0, y1) = (frame.py(y + hy), frame.py(y - hy));
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{}</title></rect>"#,
            x1 - x0,
            y1 - y0,
            color_ramp((v - lo) / (hi - lo)),
            format_float(v)
        );
    }
    frame.axes(&mut s, x_label, y_label);
    if let Some((mx, my)) = marker {
        let (px, py) = (frame.px(mx), frame.py(my));
        let _ = writeln!(
            s,
            r#"<g id="argmax"><circle cx="{px:.1}" cy="{py:.1}" r="7" fill="none" stroke="red" stroke-width="2"/><line x1="{:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="red"/><line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="red"/></g>"#,
            px - 10.0,
            px + 10.0,
            py - 10.0,
            py + 10.0
        );
    }
    // color bar
    let bx = W - RIGHT + 20.0;
    for k in 0..50 {
        let t = k as f64 / 49.0;
        let y = H - BOTTOM - (H - TOP - BOTTOM) * (k as f64 + 1.0) / 50.0;
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{y:.1}" width="16" height="{:.1}" fill="{}"/>"#,
            (H - TOP - BOTTOM) / 50.0 + 0.5,
            color_ramp(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text><text x="{}" y="{}">{}</text>"#,
        bx + 22.0,
        TOP + 10.0,
        format_float((hi * 100.0).round() / 100.0),
        bx + 22.0,
        H - BOTTOM,
        format_float((lo * 100.0).round() / 100.0)
    );
    s.push_str("</svg>\n");
    s
}

/// z-plane plot of one or more zero maps with the unit circle.
pub fn zero_plot(title: &str, maps: &[(&str, &ZeroMap)]) -> String {
    let reach = maps
        .iter()
        .flat_map(|(_, m)| m.zeros.iter())
        .map(|z| z.re.abs().max(z.im.abs()))
        .fold(1.2, f64::max)
        .min(3.0);
    let frame = Frame {
        x: (-reach, reach),
        y: (-reach, reach),
    };
    let mut s = header(title);
    frame.axes(&mut s, "real", "imag");
    let c = (frame.px(0.0), frame.py(0.0));
    let rx = frame.px(1.0) - c.0;
    let ry = c.1 - frame.py(1.0);
    let _ = writeln!(
        s,
        r#"<ellipse cx="{:.1}" cy="{:.1}" rx="{rx:.1}" ry="{ry:.1}" fill="none" stroke="gray" stroke-dasharray="4 3"/>"#,
        c.0, c.1
    );
    for (k, (name, map)) in maps.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for z in map.zeros.iter().filter(|z| z.re.abs() <= reach && z.im.abs() <= reach) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                frame.px(z.re),
                frame.py(z.im)
            );
        }
        let ly = TOP + 16.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{ly}" r="3.5" fill="none" stroke="{color}" stroke-width="1.5"/><text x="{}" y="{}">{}</text>"#,
            lx + 8.0,
            lx + 24.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Rows `map, re, im, radius, angle_rad` for every finite zero.
pub fn zero_rows(table: &mut Table, name: &str, map: &ZeroMap) {
    let mut zs: Vec<Complex64> = map.zeros.clone();
    zs.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.norm().total_cmp(&b.norm())));
    for z in zs {
        table.rows.push(vec![
            name.into(),
            z.re.into(),
            z.im.into(),
            z.norm().into(),
            z.arg().into(),
        ]);
    }
}
