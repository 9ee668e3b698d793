//! Per-panel SVG figures of a recorded time series.

use std::path::Path;

use gfm_core::harness::{Sample, TimeSeries};
use plotters::prelude::*;

use crate::error::{CliError, Result};
use crate::output::{write_file, FileEntry};

const SIZE: (u32, u32) = (900, 360);
const ACTUAL: RGBColor = RGBColor(31, 119, 180);
const REFERENCE: RGBColor = RGBColor(214, 39, 40);
const THIRD: RGBColor = RGBColor(44, 160, 44);
const FOURTH: RGBColor = RGBColor(148, 103, 189);

struct Trace {
    label: &'static str,
    color: RGBColor,
    value: fn(&Sample) -> f64,
}

struct Axes {
    y_label: &'static str,
    traces: Vec<Trace>,
}

struct Panel {
    file: &'static str,
    title: &'static str,
    axes: Vec<Axes>,
}

fn flag(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

fn panels() -> Vec<Panel> {
    let t = |label, color, value| Trace { label, color, value };
    vec![
        Panel {
            file: "currents_dq.svg",
            title: "Grid current on the controller dq axes",
            axes: vec![
                Axes {
                    y_label: "i_d (pu)",
                    traces: vec![t("i_d", ACTUAL, |s| s.i_g_d), t("i_d*", REFERENCE, |s| s.i_ref_d)],
                },
                Axes {
                    y_label: "i_q (pu)",
                    traces: vec![t("i_q", ACTUAL, |s| s.i_g_q), t("i_q*", REFERENCE, |s| s.i_ref_q)],
                },
            ],
        },
        Panel {
            file: "power.svg",
            title: "Active and reactive power",
            axes: vec![Axes {
                y_label: "power (pu)",
                traces: vec![
                    t("P", ACTUAL, |s| s.p),
                    t("P*", REFERENCE, |s| s.p_ref),
                    t("Q", THIRD, |s| s.q),
                    t("Q*", FOURTH, |s| s.q_ref),
                ],
            }],
        },
        Panel {
            file: "frequency.svg",
            title: "Controller frequency",
            axes: vec![Axes { y_label: "ω (rad/s)", traces: vec![t("ω", ACTUAL, |s| s.omega)] }],
        },
        Panel {
            file: "voltage.svg",
            title: "PCC sequence voltages and EMF",
            axes: vec![Axes {
                y_label: "voltage (pu)",
                traces: vec![
                    t("V+", ACTUAL, |s| s.v_plus),
                    t("V-", REFERENCE, |s| s.v_minus),
                    t("E", THIRD, |s| s.e_mag),
                ],
            }],
        },
        Panel {
            file: "damping.svg",
            title: "Dynamic virtual resistance",
            axes: vec![Axes { y_label: "r_v (pu)", traces: vec![t("r_v,dyn", ACTUAL, |s| s.r_v_dyn)] }],
        },
        Panel {
            file: "mode.svg",
            title: "Fault signal and fault mode",
            axes: vec![Axes {
                y_label: "state",
                traces: vec![t("SF", ACTUAL, |s| flag(s.sf)), t("FM", REFERENCE, |s| flag(s.fm))],
            }],
        },
    ]
}

fn render_err<E: std::fmt::Display>(file: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("rendering {file}: {e}"))
}

fn y_range(ts: &TimeSeries, traces: &[Trace]) -> (f64, f64) {
    let (lo, hi) = traces
        .iter()
        .flat_map(|tr| ts.samples.iter().map(tr.value))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

fn render(ts: &TimeSeries, panel: &Panel) -> Result<String> {
    let err = render_err(panel.file);
    let t0 = ts.samples[0].t;
    let t1 = ts.samples[ts.len() - 1].t.max(t0 + ts.sample_period.max(1e-9));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (SIZE.0, SIZE.1 * panel.axes.len() as u32)).into_drawing_area();
        root.fill(&WHITE).map_err(&err)?;
        let root = root.titled(panel.title, ("sans-serif", 20)).map_err(&err)?;
        for (area, axes) in root.split_evenly((panel.axes.len(), 1)).iter().zip(&panel.axes) {
            let (lo, hi) = y_range(ts, &axes.traces);
            let mut chart = ChartBuilder::on(area)
                .margin(10)
                .x_label_area_size(40)
                .y_label_area_size(70)
                .build_cartesian_2d(t0..t1, lo..hi)
                .map_err(&err)?;
            chart.configure_mesh().x_desc("t (s)").y_desc(axes.y_label).draw().map_err(&err)?;
            for tr in &axes.traces {
                let color = tr.color;
                chart
                    .draw_series(LineSeries::new(ts.samples.iter().map(|s| (s.t, (tr.value)(s))), &color))
                    .map_err(&err)?
                    .label(tr.label)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(&err)?;
        }
        root.present().map_err(&err)?;
    }
    Ok(svg)
}

/// Writes one SVG per panel into `dir`.
pub fn plot_all(ts: &TimeSeries, dir: &Path) -> Result<Vec<FileEntry>> {
    if ts.is_empty() {
        return Err(CliError::Usage("time series has no samples".into()));
    }
    panels()
        .iter()
        .map(|p| render(ts, p).and_then(|svg| write_file(dir, p.file, svg.as_bytes())))
        .collect()
}
