//! File emission: CSV with provenance headers, static SVG plots, and the
//! key=value config format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

/// `{:.16e}` prints 17 significant digits, enough for `f64::from_str` to
/// return the identical bit pattern on re-read.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvDoc {
    headers: Vec<(String, String)>,
    column_names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl CsvDoc {
    pub fn new() -> Self {
        CsvDoc {
            headers: Vec::new(),
            column_names: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn header(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.headers.push((key.into(), value.to_string()));
        self
    }

    pub fn column(&mut self, name: impl Into<String>, values: Vec<f64>) -> &mut Self {
        self.column_names.push(name.into());
        self.columns.push(values);
        self
    }

    pub fn column_front(&mut self, name: impl Into<String>, values: Vec<f64>) -> &mut Self {
        self.column_names.insert(0, name.into());
        self.columns.insert(0, values);
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let rows = self.columns.first().map_or(0, Vec::len);
        if self.columns.iter().any(|c| c.len() != rows) {
            return Err(CliError::Failure("CSV columns have unequal lengths".into()));
        }
        let mut out = String::new();
        for (k, v) in &self.headers {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", self.column_names.join(","));
        for r in 0..rows {
            let line: Vec<String> = self.columns.iter().map(|c| fmt_full(c[r])).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        write_file(path, out.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Failure(format!("creating {}: {e}", dir.display())))?;
        }
    }
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Failure(format!("creating {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::Failure(format!("writing {}: {e}", path.display())))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (0.01..10000.0).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

pub struct SvgPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

impl SvgPlot {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        const W: f64 = 860.0;
        const H: f64 = 560.0;
        const L: f64 = 72.0;
        const R: f64 = 24.0;
        const T: f64 = 46.0;
        const B: f64 = 56.0;
        let pts: Vec<(f64, f64)> = self.series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
        if pts.is_empty() {
            return Err(CliError::Failure("nothing to plot".into()));
        }
        let (mut x0, mut x1) = (f64::MAX, f64::MIN);
        let (mut y0, mut y1) = (0.0f64, f64::MIN);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(CliError::Failure("degenerate plot ranges".into()));
        }
        y1 *= 1.05;
        let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
        let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"13\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
            W / 2.0,
            xml_escape(&self.title)
        );
        // Axes with 5 ticks each.
        for i in 0..=5 {
            let x = x0 + (x1 - x0) * i as f64 / 5.0;
            let px = sx(x);
            let _ = writeln!(
                s,
                "<line x1=\"{px:.1}\" y1=\"{}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#ddd\"/>",
                sy(y0),
                sy(y1)
            );
            let _ = writeln!(
                s,
                "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                H - B + 20.0,
                tick_label(x)
            );
            let y = y0 + (y1 - y0) * i as f64 / 5.0;
            let py = sy(y);
            let _ = writeln!(
                s,
                "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{}\" y2=\"{py:.1}\" stroke=\"#ddd\"/>",
                sx(x0),
                sx(x1)
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                L - 8.0,
                py + 4.0,
                tick_label(y)
            );
        }
        let _ = writeln!(
            s,
            "<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            W - L - R,
            H - T - B
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            W / 2.0,
            H - 12.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
            H / 2.0,
            H / 2.0,
            xml_escape(&self.y_label)
        );
        for (k, (name, points)) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut poly = String::new();
            for &(x, y) in points {
                let _ = write!(poly, "{:.2},{:.2} ", sx(x), sy(y.clamp(y0, y1)));
            }
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
                poly.trim_end()
            );
            let ly = T + 18.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>",
                W - R - 150.0,
                W - R - 120.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\">{}</text>",
                W - R - 112.0,
                ly + 4.0,
                xml_escape(name)
            );
        }
        let _ = writeln!(s, "</svg>");
        write_file(path, s.as_bytes())
    }
}

fn xml_escape(raw: &str) -> String {
    raw.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Phase-plane cell plot: one square per (mu, 1/chi) cell, plus the fitted
/// boundary polyline.
pub struct PhasePlot {
    pub cells: Vec<(f64, f64, &'static str)>, // mu, inv_chi, class
    pub boundary: Vec<(f64, f64)>,
}

impl PhasePlot {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        const W: f64 = 640.0;
        const H: f64 = 560.0;
        const L: f64 = 72.0;
        const R: f64 = 24.0;
        const T: f64 = 46.0;
        const B: f64 = 56.0;
        if self.cells.is_empty() {
            return Err(CliError::Failure("no phase cells to plot".into()));
        }
        let (mut x0, mut x1) = (f64::MAX, f64::MIN);
        let (mut y0, mut y1) = (f64::MAX, f64::MIN);
        for &(m, ic, _) in &self.cells {
            x0 = x0.min(m);
            x1 = x1.max(m);
            y0 = y0.min(ic);
            y1 = y1.max(ic);
        }
        let xpad = 0.5 * ((x1 - x0).max(1.0) / self.cells.len() as f64).max(0.2);
        let ypad = 0.25 * (y1 - y0).max(0.4);
        x0 -= xpad;
        x1 += xpad;
        y0 -= ypad;
        y1 += ypad;
        let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
        let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"13\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">shape phase plane</text>",
            W / 2.0
        );
        for &(m, ic, class) in &self.cells {
            let color = match class {
                "transitions" => "#d62728",
                "converged_unimodal" => "#1f77b4",
                _ => "#bbbbbb",
            };
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"11\" fill=\"{color}\"/>",
                sx(m),
                sy(ic)
            );
        }
        if self.boundary.len() >= 2 {
            let mut poly = String::new();
            for &(m, ic) in &self.boundary {
                let _ = write!(poly, "{:.1},{:.1} ", sx(m), sy(ic));
            }
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>",
                poly.trim_end()
            );
        }
        for i in 0..=4 {
            let x = x0 + (x1 - x0) * i as f64 / 4.0;
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                sx(x),
                H - B + 20.0,
                tick_label(x)
            );
            let y = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                L - 8.0,
                sy(y) + 4.0,
                tick_label(y)
            );
        }
        let _ = writeln!(
            s,
            "<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            W - L - R,
            H - T - B
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">drift index</text>",
            W / 2.0,
            H - 12.0
        );
        let _ = writeln!(
            s,
            "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">inverse coupling</text>",
            H / 2.0,
            H / 2.0
        );
        let _ = writeln!(s, "</svg>");
        write_file(path, s.as_bytes())
    }
}

/// key=value lines; `#` comments and blank lines ignored.
pub fn parse_config(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config {} line {}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
