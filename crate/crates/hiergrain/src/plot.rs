//! Figures from run bundles: declarative plot specs (JSON, with the data
//! inlined so a spec is self-contained) and a dependency-free SVG renderer.
//!
//! Three figure families cover the model's reporting needs: alignment
//! trajectories (sw and cosine against time, with detected phase boundaries
//! as vertical markers), activation-barrier quartile trajectories, and
//! preferred-choice histograms per label at a snapshot instant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::RegimeReport;
use crate::metrics::MetricsRecord;
use crate::runner::SnapshotRecord;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no snapshot at timestep {requested}; available: {}",
        available.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "))]
    UnknownTimestep { requested: u64, available: Vec<u64> },
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("issue {requested} out of range; run has {num_issues} issues")]
    IssueOutOfRange { requested: u16, num_issues: usize },
    #[error("plot spec parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VLine {
    pub x: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub vlines: Vec<VLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub name: String,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub title: String,
    pub value_label: String,
    pub panels: Vec<Panel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlotSpec {
    Trajectory(TrajectorySpec),
    Histogram(HistogramSpec),
}

impl PlotSpec {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plot specs are serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PlotError> {
        serde_json::from_str(text).map_err(|e| PlotError::Parse(e.to_string()))
    }
}

/// Mean of one optional metric across runs at a shared row index; rows with
/// the metric undefined are left out of the mean.
fn mean_series(
    runs: &[&[MetricsRecord]],
    get: impl Fn(&MetricsRecord) -> Option<f64>,
    name: &str,
) -> Series {
    let n_rows = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let mut points = Vec::with_capacity(n_rows);
    for row in 0..n_rows {
        let vals: Vec<f64> = runs.iter().filter_map(|r| get(&r[row])).collect();
        if !vals.is_empty() {
            let t = runs[0][row].timestep as f64;
            points.push([t, vals.iter().sum::<f64>() / vals.len() as f64]);
        }
    }
    Series { name: name.to_string(), points }
}

fn boundary_vlines(regime: &RegimeReport) -> Vec<VLine> {
    let mut v = Vec::new();
    if let Some(b) = &regime.phase_boundaries {
        v.push(VLine { x: b.end_phase_i as f64, label: "end phase I".into() });
        v.push(VLine { x: b.end_phase_ii as f64, label: "end phase II".into() });
        v.push(VLine { x: b.end_phase_iii as f64, label: "end phase III".into() });
    } else if let Some(te) = regime.t_equilibrium {
        v.push(VLine { x: te as f64, label: "equilibrium".into() });
    }
    v
}

/// Replicate-mean sw and cosine trajectories with phase-boundary markers.
pub fn alignment_trajectory(
    runs: &[&[MetricsRecord]],
    regime: Option<&RegimeReport>,
    title: &str,
) -> Result<PlotSpec, PlotError> {
    let series = vec![
        mean_series(runs, |r| r.sw_index, "sw_index"),
        mean_series(runs, |r| r.cosine_index, "cosine_index"),
    ];
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::Empty("no defined sw or cosine values".into()));
    }
    Ok(PlotSpec::Trajectory(TrajectorySpec {
        title: title.to_string(),
        x_label: "timestep".into(),
        y_label: "alignment index".into(),
        series,
        vlines: regime.map(boundary_vlines).unwrap_or_default(),
    }))
}

/// Replicate-mean activation-barrier quartile trajectories.
pub fn barrier_trajectory(
    runs: &[&[MetricsRecord]],
    title: &str,
) -> Result<PlotSpec, PlotError> {
    let series = vec![
        mean_series(runs, |r| Some(r.ab_q1), "barrier_q1"),
        mean_series(runs, |r| Some(r.ab_median), "barrier_median"),
        mean_series(runs, |r| Some(r.ab_q3), "barrier_q3"),
    ];
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::Empty("no metric records".into()));
    }
    Ok(PlotSpec::Trajectory(TrajectorySpec {
        title: title.to_string(),
        x_label: "timestep".into(),
        y_label: "activation barrier".into(),
        series,
        vlines: Vec::new(),
    }))
}

/// Finds the snapshot at exactly `timestep`, or reports which instants exist.
pub fn snapshot_at(snapshots: &[SnapshotRecord], timestep: u64) -> Result<&SnapshotRecord, PlotError> {
    snapshots.iter().find(|s| s.timestep == timestep).ok_or_else(|| {
        PlotError::UnknownTimestep {
            requested: timestep,
            available: snapshots.iter().map(|s| s.timestep).collect(),
        }
    })
}

/// Per-label preferred-choice histograms for one issue at one instant, with a
/// whole-population panel alongside.
pub fn choice_histogram(
    snapshot: &SnapshotRecord,
    issue: u16,
    title: &str,
) -> Result<PlotSpec, PlotError> {
    let num_issues = snapshot.global.len();
    if issue as usize >= num_issues {
        return Err(PlotError::IssueOutOfRange { requested: issue, num_issues });
    }
    let bars = |hist: &[f64]| {
        hist.iter()
            .enumerate()
            .map(|(c, &v)| Bar { label: format!("choice {c}"), value: v })
            .collect::<Vec<_>>()
    };
    let mut panels: Vec<Panel> = snapshot
        .labels
        .iter()
        .map(|l| Panel {
            name: format!("label {} (n={})", l.label, l.n_members),
            bars: bars(&l.hist[issue as usize]),
        })
        .collect();
    panels.push(Panel {
        name: "all agents".into(),
        bars: bars(&snapshot.global[issue as usize]),
    });
    Ok(PlotSpec::Histogram(HistogramSpec {
        title: title.to_string(),
        value_label: "preference mass".into(),
        panels,
    }))
}

// ---------------------------------------------------------------------------
// SVG rendering

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 6] =
    ["#1b6ca8", "#d1495b", "#2e933c", "#8a4fff", "#e08a00", "#4f5d75"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 10_000.0 || a < 0.001 {
        format!("{v:.1e}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        if self.x1 == self.x0 {
            return MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0;
        }
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        if self.y1 == self.y0 {
            return MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0;
        }
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    )
}

fn axis_ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn render_trajectory(spec: &TrajectorySpec) -> String {
    let points: Vec<[f64; 2]> =
        spec.series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for [x, y] in &points {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    for v in &spec.vlines {
        x0 = x0.min(v.x);
        x1 = x1.max(v.x);
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let frame = Frame { x0, x1, y0, y1 };

    let mut out = svg_header(&spec.title);
    // axes
    let (left, right) = (frame.sx(x0), frame.sx(x1));
    let (bottom, top) = (frame.sy(y0), frame.sy(y1));
    out.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n\
         <line x1=\"{left}\" y1=\"{bottom}\" x2=\"{left}\" y2=\"{top}\" stroke=\"black\"/>\n"
    ));
    for t in axis_ticks(x0, x1) {
        let x = frame.sx(t);
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{bottom}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            bottom + 5.0,
            bottom + 18.0,
            fmt_tick(t)
        ));
    }
    for t in axis_ticks(y0, y1) {
        let y = frame.sy(t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            left - 5.0,
            left - 8.0,
            y + 4.0,
            fmt_tick(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        (left + right) / 2.0,
        HEIGHT - 12.0,
        esc(&spec.x_label),
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        esc(&spec.y_label)
    ));

    for v in &spec.vlines {
        let x = frame.sx(v.x);
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{top}\" x2=\"{x}\" y2=\"{bottom}\" stroke=\"#999\" \
             stroke-dasharray=\"5 4\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#555\" \
             transform=\"rotate(-90 {} {})\">{}</text>\n",
            x - 4.0,
            top + 4.0,
            x - 4.0,
            top + 4.0,
            esc(&v.label)
        ));
    }

    for (i, series) in spec.series.iter().enumerate() {
        if series.points.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|[x, y]| format!("{:.2},{:.2}", frame.sx(*x), frame.sy(*y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            right - 150.0,
            top + 16.0 + 16.0 * i as f64,
            esc(&series.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn render_histogram(spec: &HistogramSpec) -> String {
    let mut out = svg_header(&spec.title);
    let n = spec.panels.len().max(1);
    let panel_w = (WIDTH - MARGIN_L - MARGIN_R) / n as f64;
    let max_val = spec
        .panels
        .iter()
        .flat_map(|p| p.bars.iter().map(|b| b.value))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let (bottom, top) = (HEIGHT - MARGIN_B, MARGIN_T + 20.0);
    let plot_h = bottom - top;

    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        esc(&spec.value_label)
    ));

    for (p, panel) in spec.panels.iter().enumerate() {
        let px = MARGIN_L + panel_w * p as f64;
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{top}\" x2=\"{px}\" y2=\"{bottom}\" stroke=\"#ccc\"/>\n\
             <line x1=\"{px}\" y1=\"{bottom}\" x2=\"{}\" y2=\"{bottom}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            px + panel_w,
            px + panel_w / 2.0,
            top - 6.0,
            esc(&panel.name)
        ));
        let nb = panel.bars.len().max(1);
        let slot = (panel_w - 10.0) / nb as f64;
        for (b, bar) in panel.bars.iter().enumerate() {
            let h = bar.value / max_val * plot_h;
            let x = px + 5.0 + slot * b as f64 + slot * 0.1;
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"{}\"/>\n\
                 <text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>\n",
                x,
                bottom - h,
                slot * 0.8,
                h,
                PALETTE[b % PALETTE.len()],
                x + slot * 0.4,
                bottom + 14.0,
                esc(&bar.label)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Renders any spec to a standalone SVG document.
pub fn render_svg(spec: &PlotSpec) -> String {
    match spec {
        PlotSpec::Trajectory(t) => render_trajectory(t),
        PlotSpec::Histogram(h) => render_histogram(h),
    }
}
