//! SVG figures for a pipeline run.
//!
//! Charts are written by hand as plain SVG text so the output depends on
//! nothing but the data: two runs over the same rows give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::pipeline::{BoutRow, DecodeRow};
use crate::signal::{ConcentrationLevel, Environment, GasLabel};

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 46.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Half-length of a symmetric error bar.
    pub err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<Point>,
    /// Join consecutive points.
    pub line: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_ticks: Vec<f64>,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Roughly five round tick values covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).floor() as i64;
    let end = (hi / step).ceil() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let (x_lo, x_hi) = match (panel.x_ticks.first(), panel.x_ticks.last()) {
        (Some(&a), Some(&b)) if b > a => {
            let pad = 0.08 * (b - a);
            (a - pad, b + pad)
        }
        _ => (0.0, 1.0),
    };
    let ys = panel.series.iter().flat_map(|s| {
        s.points.iter().flat_map(|p| {
            let e = p.err.unwrap_or(0.0);
            [p.y - e, p.y + e]
        })
    });
    let (mut y_lo, mut y_hi) = ys.fold((0.0f64, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    if !y_hi.is_finite() || y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let y_ticks = nice_ticks(y_lo, y_hi);
    y_lo = y_lo.min(y_ticks[0]);
    y_hi = y_hi.max(*y_ticks.last().unwrap());
    let sx = |x: f64| ox + MARGIN_L + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| oy + MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##,
        ox + MARGIN_L,
        oy + MARGIN_T
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13" font-weight="bold">{}</text>"#,
        ox + PANEL_W / 2.0,
        oy + 20.0,
        escape(&panel.title)
    )
    .unwrap();
    for &t in &panel.x_ticks {
        let x = sx(t);
        let y0 = oy + MARGIN_T + ph;
        writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"##,
            y0 + 4.0,
            y0 + 16.0,
            tick_label(t)
        )
        .unwrap();
    }
    for &t in &y_ticks {
        let y = sy(t);
        let x0 = ox + MARGIN_L;
        writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#444"/><line x1="{x0:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"##,
            x0 - 4.0,
            x0 + pw,
            x0 - 6.0,
            y + 4.0,
            tick_label(t)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + PANEL_H - 8.0,
        escape(&panel.x_label)
    )
    .unwrap();
    let (lx, ly) = (ox + 14.0, oy + MARGIN_T + ph / 2.0);
    writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&panel.y_label)
    )
    .unwrap();

    for (k, s) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if s.line && s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y)))
                .collect();
            writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            )
            .unwrap();
        }
        for p in &s.points {
            let (x, y) = (sx(p.x), sy(p.y));
            if let Some(e) = p.err.filter(|e| *e > 0.0) {
                let (y1, y2) = (sy(p.y - e), sy(p.y + e));
                writeln!(
                    out,
                    r#"<path d="M{x:.2},{y1:.2}V{y2:.2}M{:.2},{y1:.2}H{:.2}M{:.2},{y2:.2}H{:.2}" stroke="{color}" fill="none"/>"#,
                    x - 3.0,
                    x + 3.0,
                    x - 3.0,
                    x + 3.0
                )
                .unwrap();
            }
            writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
            )
            .unwrap();
        }
        let (kx, ky) = (ox + MARGIN_L + 8.0, oy + MARGIN_T + 14.0 + 14.0 * k as f64);
        writeln!(
            out,
            r#"<circle cx="{kx:.2}" cy="{:.2}" r="4" fill="{color}"/><text x="{:.2}" y="{ky:.2}" font-size="11">{}</text>"#,
            ky - 4.0,
            kx + 8.0,
            escape(&s.name)
        )
        .unwrap();
    }
}

/// Lays `panels` out left to right in one SVG document.
pub fn render_svg(title: &str, panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, 4);
    let rows = panels.len().div_ceil(cols).max(1);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64 + 30.0;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    )
    .unwrap();
    for (i, p) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % cols) as f64;
        let oy = 30.0 + PANEL_H * (i / cols) as f64;
        render_panel(&mut out, p, ox, oy);
    }
    out.push_str("</svg>\n");
    out
}

fn level_ticks() -> Vec<f64> {
    ConcentrationLevel::ALL
        .iter()
        .map(|l| l.percent())
        .collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Mean ± sd per gas and percent, one series per gas.
fn summary_series(values: &BTreeMap<GasLabel, BTreeMap<u8, Vec<f64>>>) -> Vec<Series> {
    values
        .iter()
        .map(|(gas, by_level)| Series {
            name: gas.to_string(),
            line: true,
            points: by_level
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(&idx, v)| {
                    let (m, s) = mean_sd(v);
                    Point {
                        x: 20.0 * idx as f64,
                        y: m,
                        err: Some(s),
                    }
                })
                .collect(),
        })
        .collect()
}

/// Bout slope against concentration, one panel per sensor.
pub fn bout_slope_figure(rows: &[BoutRow]) -> String {
    let mut by_sensor: BTreeMap<&str, BTreeMap<GasLabel, BTreeMap<u8, Vec<f64>>>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in rows
        .iter()
        .filter(|r| r.environment == Environment::SinglePulse)
    {
        let (Some(gas), Some(level)) = (&r.gas, r.concentration.and_then(|c| c.level())) else {
            continue;
        };
        if !order.contains(&r.sensor.as_str()) {
            order.push(&r.sensor);
        }
        by_sensor
            .entry(&r.sensor)
            .or_default()
            .entry(gas.clone())
            .or_default()
            .entry(level.index())
            .or_default()
            .push(r.slope);
    }
    let panels: Vec<Panel> = order
        .iter()
        .map(|s| Panel {
            title: format!("Sensor {s}"),
            x_label: "Concentration (%)".into(),
            y_label: "Bout slope (units/s)".into(),
            x_ticks: level_ticks(),
            series: summary_series(&by_sensor[s]),
        })
        .collect();
    render_svg("Bout slope vs concentration", &panels)
}

fn component_panels(rows: &[DecodeRow], sensors: &[String], summary: bool) -> Vec<Panel> {
    let labels: Vec<String> = sensors
        .iter()
        .map(|s| format!("Sensor {s}"))
        .chain(std::iter::once("Summed".to_string()))
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(k, title)| {
            let mut values: BTreeMap<GasLabel, BTreeMap<u8, Vec<f64>>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.peak.is_none()) {
                let (Some(gas), Some(level)) = (&r.gas, r.concentration.and_then(|c| c.level()))
                else {
                    continue;
                };
                let v = if k < sensors.len() {
                    r.per_sensor.get(k).copied().flatten()
                } else {
                    r.summed
                };
                if let Some(v) = v {
                    values
                        .entry(gas.clone())
                        .or_default()
                        .entry(level.index())
                        .or_default()
                        .push(v);
                }
            }
            let series = if summary {
                summary_series(&values)
            } else {
                values
                    .iter()
                    .map(|(gas, by_level)| Series {
                        name: gas.to_string(),
                        line: false,
                        points: by_level
                            .iter()
                            .flat_map(|(&idx, v)| {
                                v.iter().map(move |&y| Point {
                                    x: 20.0 * idx as f64,
                                    y,
                                    err: None,
                                })
                            })
                            .collect(),
                    })
                    .collect()
            };
            Panel {
                title: title.clone(),
                x_label: "Concentration (%)".into(),
                y_label: "1/Δt (1/s)".into(),
                x_ticks: level_ticks(),
                series,
            }
        })
        .collect()
}

/// Inverse latency against concentration, mean ± sd over trials.
pub fn inv_delta_t_figure(rows: &[DecodeRow], sensors: &[String]) -> String {
    render_svg(
        "Inverse time difference vs concentration",
        &component_panels(rows, sensors, true),
    )
}

/// Every trial's inverse latency, per sensor and summed.
pub fn scatter_figure(rows: &[DecodeRow], sensors: &[String]) -> String {
    render_svg(
        "Per-trial inverse time difference",
        &component_panels(rows, sensors, false),
    )
}

/// File name and contents of each figure.
pub fn render_reports(
    bouts: &[BoutRow],
    decode: &[DecodeRow],
    sensors: &[String],
) -> Vec<(String, String)> {
    vec![
        ("bout_slope.svg".into(), bout_slope_figure(bouts)),
        (
            "inv_delta_t.svg".into(),
            inv_delta_t_figure(decode, sensors),
        ),
        ("scatter.svg".into(), scatter_figure(decode, sensors)),
    ]
}
