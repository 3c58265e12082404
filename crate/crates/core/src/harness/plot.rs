use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiment::{format_float, TraceFile};

/// Smallest gap drawn on the log axis; smaller and nonpositive gaps are
/// clipped to it.
pub const GAP_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Passes,
    Time,
}

impl PlotAxis {
    fn label(self) -> &'static str {
        match self {
            PlotAxis::Passes => "effective passes",
            PlotAxis::Time => "wall time (s)",
        }
    }
}

/// Path of the tab-separated sidecar written next to a plot.
pub fn sidecar_path(plot: &Path) -> PathBuf {
    plot.with_extension("tsv")
}

/// Writes an SVG of log-scale gap against passes or time, one curve per
/// algorithm, plus a tab-separated sidecar holding the plotted points.
pub fn emit_plot(trace: &TraceFile, axis: PlotAxis, path: &Path) -> Result<()> {
    if !trace.has_gap() {
        return Err(Error::InvalidArgument(
            "trace has no gap column; rerun with a reference optimum".into(),
        ));
    }
    let mut clipped = 0usize;
    let curves: Vec<(&str, Vec<(f64, f64)>)> = trace
        .algorithms()
        .into_iter()
        .map(|alg| {
            let pts = trace
                .rows
                .iter()
                .filter(|r| r.algorithm == alg)
                .map(|r| {
                    let x = match axis {
                        PlotAxis::Passes => r.effective_passes,
                        PlotAxis::Time => r.wall_time_s,
                    };
                    let gap = r.gap.expect("checked above");
                    if !(gap >= GAP_FLOOR) {
                        clipped += 1;
                    }
                    (x, gap.max(GAP_FLOOR))
                })
                .collect();
            (alg, pts)
        })
        .collect();

    let mut sidecar = format!("algorithm\t{}\tgap\n", axis.label());
    for (alg, pts) in &curves {
        for (x, g) in pts {
            let _ = writeln!(sidecar, "{alg}\t{}\t{}", format_float(*x), format_float(*g));
        }
    }
    fs::write(sidecar_path(path), sidecar)?;
    fs::write(path, render_svg(&curves, axis, clipped))?;
    Ok(())
}

fn render_svg(curves: &[(&str, Vec<(f64, f64)>)], axis: PlotAxis, clipped: usize) -> String {
    let all = curves.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, g) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(g.log10());
        y1 = y1.max(g.log10());
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |g: f64| TOP + (y1 - g.log10()) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let decades = (y1 - y0) as i64;
    let step = (decades / 8).max(1);
    let mut e = y0 as i64;
    while e <= y1 as i64 {
        let y = sy(10f64.powi(e as i32));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        e += step;
    }
    for k in 0..=5 {
        let xv = x0 + (x1 - x0) * k as f64 / 5.0;
        let x = sx(xv);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            tick_label(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        axis.label()
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">objective gap</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, (alg, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, g)| format!("{:.2},{:.2}", sx(x), sy(g))).collect();
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        for &(x, g) in pts.iter().filter(|_| pts.len() == 1) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(g));
        }
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(alg)
        );
    }
    if clipped > 0 {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="gray">{clipped} gap value(s) below 1e-16 clipped</text>"#,
            LEFT + pw + 15.0,
            TOP + ph
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
