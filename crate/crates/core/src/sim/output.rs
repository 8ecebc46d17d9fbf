//! Trajectory artifacts: CSV, pre-split plot data and a minimal SVG chart.

use super::TrajectoryLog;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{self, Write};

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

fn float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Header row followed by one line per log row. Floats carry 9 significant
/// digits and booleans are written as `1`/`0`.
pub fn write_csv<W: Write>(log: &TrajectoryLog, mut out: W) -> io::Result<()> {
    let Some(first) = log.rows.first() else {
        return writeln!(out, "t");
    };
    let (n, m) = (first.x.len(), first.u.len());
    let (pm, pe) = (first.theta_m.len(), first.theta_em.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(indexed("x", n))
        .chain(indexed("x_d", n))
        .chain(indexed("u", m))
        .chain(indexed("u_ccm", m))
        .chain(indexed("theta_m", pm))
        .chain(indexed("theta_em", pe))
        .chain(
            ["energy", "slack", "geodesic_converged", "geodesic_iterations", "error_measure", "in_deadzone"]
                .map(String::from),
        )
        .chain(indexed("theta_dot_m", pm))
        .chain(indexed("theta_dot_em", pe))
        .collect();
    let mut csv = csv::Writer::from_writer(&mut out);
    csv.write_record(&header)?;
    for r in &log.rows {
        let mut cells: Vec<String> = Vec::with_capacity(header.len());
        cells.push(float(r.t));
        for v in [&r.x, &r.x_d, &r.u, &r.u_ccm, &r.theta_m, &r.theta_em] {
            cells.extend(v.iter().map(|x| float(*x)));
        }
        cells.push(float(r.energy));
        cells.push(float(r.slack));
        cells.push(u8::from(r.geodesic_converged).to_string());
        cells.push(r.geodesic_iterations.to_string());
        cells.push(float(r.error_measure));
        cells.push(u8::from(r.in_deadzone).to_string());
        for v in [&r.theta_dot_m, &r.theta_dot_em] {
            cells.extend(v.iter().map(|x| float(*x)));
        }
        csv.write_record(&cells)?;
    }
    csv.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Log data split per subplot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub t: Vec<f64>,
    pub state: Vec<Series>,
    pub parameters: Vec<Series>,
    pub energy: Vec<Series>,
    pub input: Vec<Series>,
}

fn column<F: Fn(&super::LogRow) -> f64>(log: &TrajectoryLog, label: String, f: F) -> Series {
    Series {
        label,
        values: log.rows.iter().map(f).collect(),
    }
}

pub fn plot_data(log: &TrajectoryLog) -> PlotData {
    let Some(first) = log.rows.first() else {
        return PlotData {
            t: vec![],
            state: vec![],
            parameters: vec![],
            energy: vec![],
            input: vec![],
        };
    };
    let state = (0..first.x.len())
        .map(|i| column(log, format!("x{}", i + 1), |r| r.x[i]))
        .collect();
    let parameters = (0..first.theta_em.len())
        .map(|i| column(log, format!("theta_em{}", i + 1), |r| r.theta_em[i]))
        .chain((0..first.theta_m.len()).map(|i| column(log, format!("theta_m{}", i + 1), |r| r.theta_m[i])))
        .collect();
    let input = (0..first.u.len())
        .map(|i| column(log, format!("u{}", i + 1), |r| r.u[i]))
        .collect();
    PlotData {
        t: log.times(),
        state,
        parameters,
        energy: vec![column(log, "energy".into(), |r| r.energy)],
        input,
    }
}

pub fn write_plot_json<W: Write>(log: &TrajectoryLog, out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(out, &plot_data(log)).map_err(io::Error::other)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn panel(svg: &mut String, t: &[f64], series: &[Series], title: &str, top: f64) {
    const LEFT: f64 = 70.0;
    const WIDTH: f64 = 560.0;
    const HEIGHT: f64 = 160.0;
    let finite = |v: &f64| v.is_finite();
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().copied().filter(finite))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0));
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let px = |tv: f64| LEFT + WIDTH * (tv - t0) / span;
    let py = |v: f64| top + HEIGHT * (1.0 - (v - lo) / (hi - lo));

    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{top}" width="{WIDTH}" height="{HEIGHT}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}" font-size="13">{title}</text>"#, top - 6.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{hi:.3}</text>"#,
        LEFT - 4.0,
        top + 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{lo:.3}</text>"#,
        LEFT - 4.0,
        top + HEIGHT
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">t = {t1:.2}</text>"#,
        LEFT + WIDTH,
        top + HEIGHT + 12.0
    );
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = t
            .iter()
            .zip(&s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(tv, v)| format!("{:.2},{:.2}", px(*tv), py(*v)))
            .collect();
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.3" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" fill="{colour}">{}</text>"#,
            LEFT + WIDTH + 8.0,
            top + 12.0 + 12.0 * k as f64,
            s.label
        );
    }
}

/// Three stacked line charts: states, parameter estimates and energy.
pub fn write_svg<W: Write>(log: &TrajectoryLog, mut out: W) -> io::Result<()> {
    let data = plot_data(log);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="720" height="640" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    panel(&mut svg, &data.t, &data.state, "state", 30.0);
    panel(&mut svg, &data.t, &data.parameters, "parameter estimates", 240.0);
    panel(&mut svg, &data.t, &data.energy, "energy", 450.0);
    svg.push_str("</svg>\n");
    out.write_all(svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LogRow, SimStatus};
    use crate::Vector;

    fn log() -> TrajectoryLog {
        let rows = (0..3)
            .map(|i| LogRow {
                t: i as f64 * 0.5,
                x: Vector::from_vec(vec![1.0 / (i + 1) as f64, 0.0]),
                x_d: Vector::zeros(2),
                u: Vector::from_vec(vec![-0.25]),
                u_ccm: Vector::from_vec(vec![-0.25]),
                theta_m: Vector::from_vec(vec![0.5]),
                theta_em: Vector::zeros(0),
                energy: 2.0,
                slack: -1.0,
                geodesic_converged: i != 1,
                geodesic_iterations: 3,
                error_measure: 0.1,
                in_deadzone: false,
                theta_dot_m: Vector::from_vec(vec![0.0]),
                theta_dot_em: Vector::zeros(0),
            })
            .collect();
        TrajectoryLog {
            rows,
            status: SimStatus::Completed,
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&log(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[0],
            "t,x1,x2,x_d1,x_d2,u1,u_ccm1,theta_m1,energy,slack,geodesic_converged,geodesic_iterations,error_measure,in_deadzone,theta_dot_m1"
        );
        let cells: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(cells[0], "5.00000000e-1");
        assert_eq!(cells[1], "5.00000000e-1");
        assert_eq!(cells[10], "0");
        assert_eq!(cells.len(), 15);
    }

    #[test]
    fn svg_and_json_are_emitted() {
        let mut buf = Vec::new();
        write_svg(&log(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2 + 1 + 1);
        let mut buf = Vec::new();
        write_plot_json(&log(), &mut buf).unwrap();
        let back: PlotData = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back.t, vec![0.0, 0.5, 1.0]);
    }
}
