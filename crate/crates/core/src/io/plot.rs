//! Two-panel SVG of a run: HTO traces with the alarm limit on top, separator
//! pressure and its setpoint below.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::TimeSeriesRecord;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 60.0;
/// Traces are thinned to at most this many points.
const MAX_POINTS: usize = 1500;

struct Trace<'a> {
    label: &'a str,
    color: &'a str,
    dash: Option<&'a str>,
    values: Vec<f64>,
}

struct Panel<'a> {
    y_label: &'a str,
    traces: Vec<Trace<'a>>,
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_panel(out: &mut String, panel: &Panel, t: &[f64], top: f64, stride: usize) {
    let (t0, t1) = (t[0], *t.last().expect("nonempty"));
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for tr in &panel.traces {
        for v in tr.values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (lo, hi) = nice_range(lo, hi);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let x = |tv: f64| MARGIN_L + (tv - t0) / t_span * plot_w;
    let y = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;

    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.4}</text>"#,
            MARGIN_L - 5.0,
            y(v) + 4.0,
            v
        );
        let tv = t0 + t_span * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.0}</text>"#,
            x(tv),
            top + PANEL_H + 15.0,
            tv / 60.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="15" y="{:.1}" font-size="12" transform="rotate(-90 15 {:.1})" text-anchor="middle">{}</text>"#,
        top + PANEL_H / 2.0,
        top + PANEL_H / 2.0,
        escape(panel.y_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">t [min]</text>"#,
        MARGIN_L + plot_w / 2.0,
        top + PANEL_H + 32.0
    );
    for (i, tr) in panel.traces.iter().enumerate() {
        let mut pts = String::new();
        for k in (0..t.len()).step_by(stride).chain(std::iter::once(t.len() - 1)) {
            let v = tr.values[k];
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(t[k]), y(v.clamp(lo, hi)));
            }
        }
        let dash = tr
            .dash
            .map(|d| format!(r#" stroke-dasharray="{d}""#))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
            tr.color,
            pts.trim_end()
        );
        let ly = top + 15.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/>"#,
            lx + 20.0,
            tr.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            lx + 25.0,
            ly + 4.0,
            escape(tr.label)
        );
    }
}

/// Renders the figure as an SVG document.
pub fn render_svg(records: &[TimeSeriesRecord], alarm_limit: f64) -> Result<String> {
    if records.is_empty() {
        return Err(Error::domain("no records to plot"));
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let stride = records.len().div_ceil(MAX_POINTS).max(1);
    let col = |f: &dyn Fn(&TimeSeriesRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let purity = Panel {
        y_label: "HTO [-]",
        traces: vec![
            Trace {
                label: "HTO_n",
                color: "#1f77b4",
                dash: None,
                values: col(&|r| r.pipe_hto()),
            },
            Trace {
                label: "HTO_n+1",
                color: "#ff7f0e",
                dash: None,
                values: col(&|r| r.separator_hto()),
            },
            Trace {
                label: "HTO_n estimate",
                color: "#2ca02c",
                dash: Some("6 3"),
                values: col(&|r| r.hto_hat),
            },
            Trace {
                label: "HTO_n+1 measured",
                color: "#9a9a9a",
                dash: None,
                values: col(&|r| r.hto_meas),
            },
            Trace {
                label: "AL",
                color: "#d62728",
                dash: Some("2 3"),
                values: vec![alarm_limit; records.len()],
            },
        ],
    };
    let pressure = Panel {
        y_label: "p [bar]",
        traces: vec![
            Trace {
                label: "p",
                color: "#1f77b4",
                dash: None,
                values: col(&|r| *r.pressure.last().expect("separator pressure")),
            },
            Trace {
                label: "p_SP",
                color: "#d62728",
                dash: Some("6 3"),
                values: col(&|r| r.p_sp),
            },
        ],
    };
    let height = MARGIN_T + 2.0 * PANEL_H + GAP + 50.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    draw_panel(&mut out, &purity, &t, MARGIN_T, stride);
    draw_panel(&mut out, &pressure, &t, MARGIN_T + PANEL_H + GAP, stride);
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plots(records: &[TimeSeriesRecord], alarm_limit: f64, path: &Path) -> Result<()> {
    let svg = render_svg(records, alarm_limit)?;
    super::write_atomic(path, svg.as_bytes())
}
