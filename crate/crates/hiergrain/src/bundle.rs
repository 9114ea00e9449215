//! On-disk layout of a run bundle and its lossless (de)serialization.
//!
//! A bundle directory holds exactly four files:
//!
//! * `manifest.json`   — provenance ([`RunManifest`]), read first; its config
//!   fixes the dynamic CSV column set
//! * `metrics.csv`     — one row per snapshot instant
//! * `snapshots.jsonl` — one [`SnapshotRecord`] per line, same instants
//! * `regime.json`     — the [`RegimeReport`](crate::analysis::RegimeReport)
//!
//! Floats are written in Rust's shortest round-trip form, so reading a bundle
//! back reproduces the exact in-memory values bit for bit, and writing the
//! same run twice yields byte-identical files. Absent (undefined) metrics are
//! empty CSV fields, never `0`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::RunManifest;
use crate::metrics::MetricsRecord;
use crate::runner::{RunOutput, SnapshotRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const REGIME_FILE: &str = "regime.json";

/// All four bundle files, relative to the bundle directory.
pub const BUNDLE_FILES: [&str; 4] =
    [MANIFEST_FILE, METRICS_FILE, SNAPSHOTS_FILE, REGIME_FILE];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
}

impl BundleError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }

    fn malformed(path: &Path, msg: impl Into<String>) -> Self {
        Self::Malformed { path: path.to_owned(), msg: msg.into() }
    }
}

/// Header row of `metrics.csv` for a run with the given table shape. The
/// trailing columns are dynamic: one per label, then one per issue.
pub fn metrics_header(num_labels: u16, num_issues: u16) -> Vec<String> {
    let mut h: Vec<String> = [
        "timestep",
        "sw_index",
        "cosine_index",
        "mi_mean",
        "ab_q1",
        "ab_median",
        "ab_q3",
        "agent_entropy_mean",
        "n_choice_changes_window",
        "n_label_switches_window",
        "t_last_choice_change",
    ]
    .into_iter()
    .map(str::to_owned)
    .collect();
    h.extend((0..num_labels).map(|l| format!("sw_label_{l}")));
    h.extend((0..num_issues).map(|i| format!("mi_issue_{i}")));
    h
}

fn fmt_f64(v: f64) -> String {
    debug_assert!(v.is_finite(), "metrics must be finite");
    format!("{v}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_row(r: &MetricsRecord) -> Vec<String> {
    let mut row = vec![
        r.timestep.to_string(),
        fmt_opt_f64(r.sw_index),
        fmt_opt_f64(r.cosine_index),
        fmt_opt_f64(r.mutual_information_mean),
        fmt_f64(r.ab_q1),
        fmt_f64(r.ab_median),
        fmt_f64(r.ab_q3),
        fmt_f64(r.agent_entropy_mean),
        r.n_choice_changes_window.to_string(),
        r.n_label_switches_window.to_string(),
        fmt_opt_u64(r.t_last_choice_change),
    ];
    row.extend(r.per_label_sw.iter().map(|&v| fmt_opt_f64(v)));
    row.extend(r.mutual_information.iter().map(|&v| fmt_opt_f64(v)));
    row
}

fn parse_u64(path: &Path, field: &str, s: &str) -> Result<u64, BundleError> {
    s.parse()
        .map_err(|e| BundleError::malformed(path, format!("bad {field} value {s:?}: {e}")))
}

fn parse_f64(path: &Path, field: &str, s: &str) -> Result<f64, BundleError> {
    s.parse()
        .map_err(|e| BundleError::malformed(path, format!("bad {field} value {s:?}: {e}")))
}

fn parse_opt_f64(path: &Path, field: &str, s: &str) -> Result<Option<f64>, BundleError> {
    if s.is_empty() { Ok(None) } else { parse_f64(path, field, s).map(Some) }
}

fn parse_opt_u64(path: &Path, field: &str, s: &str) -> Result<Option<u64>, BundleError> {
    if s.is_empty() { Ok(None) } else { parse_u64(path, field, s).map(Some) }
}

fn write_text(path: &Path, text: &str) -> Result<(), BundleError> {
    fs::write(path, text).map_err(|e| BundleError::io(path, e))
}

fn pretty_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<String, BundleError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| BundleError::malformed(path, e.to_string()))
}

/// Writes all four bundle files under `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, out: &RunOutput) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(|e| BundleError::io(dir, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    write_text(&manifest_path, &pretty_json(&manifest_path, &out.manifest)?)?;

    let metrics_path = dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| BundleError::io(&metrics_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let cfg = &out.manifest.config;
    w.write_record(metrics_header(cfg.num_labels, cfg.num_issues))
        .map_err(|e| BundleError::malformed(&metrics_path, e.to_string()))?;
    for record in &out.records {
        w.write_record(record_row(record))
            .map_err(|e| BundleError::malformed(&metrics_path, e.to_string()))?;
    }
    w.flush().map_err(|e| BundleError::io(&metrics_path, e))?;

    let snapshots_path = dir.join(SNAPSHOTS_FILE);
    let file =
        File::create(&snapshots_path).map_err(|e| BundleError::io(&snapshots_path, e))?;
    let mut w = BufWriter::new(file);
    for snap in &out.snapshots {
        let line = serde_json::to_string(snap)
            .map_err(|e| BundleError::malformed(&snapshots_path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| BundleError::io(&snapshots_path, e))?;
    }
    w.flush().map_err(|e| BundleError::io(&snapshots_path, e))?;

    let regime_path = dir.join(REGIME_FILE);
    write_text(&regime_path, &pretty_json(&regime_path, &out.regime)?)
}

fn read_to_string(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(|e| BundleError::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, BundleError> {
    let path = dir.join(MANIFEST_FILE);
    serde_json::from_str(&read_to_string(&path)?)
        .map_err(|e| BundleError::malformed(&path, e.to_string()))
}

/// Reads `metrics.csv` back into records. The column layout depends on the
/// run's label and issue counts, so the manifest must be read first.
pub fn read_metrics(
    dir: &Path,
    num_labels: u16,
    num_issues: u16,
) -> Result<Vec<MetricsRecord>, BundleError> {
    let path = dir.join(METRICS_FILE);
    let file = File::open(&path).map_err(|e| BundleError::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let expected = metrics_header(num_labels, num_issues);
    let header = reader
        .headers()
        .map_err(|e| BundleError::malformed(&path, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(BundleError::malformed(
            &path,
            format!("unexpected header {got:?}, expected {expected:?}"),
        ));
    }

    let (nl, ni) = (num_labels as usize, num_issues as usize);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| BundleError::malformed(&path, e.to_string()))?;
        if row.len() != expected.len() {
            return Err(BundleError::malformed(
                &path,
                format!("row has {} fields, expected {}", row.len(), expected.len()),
            ));
        }
        let f = |i: usize| row.get(i).unwrap();
        records.push(MetricsRecord {
            timestep: parse_u64(&path, "timestep", f(0))?,
            sw_index: parse_opt_f64(&path, "sw_index", f(1))?,
            cosine_index: parse_opt_f64(&path, "cosine_index", f(2))?,
            mutual_information_mean: parse_opt_f64(&path, "mi_mean", f(3))?,
            ab_q1: parse_f64(&path, "ab_q1", f(4))?,
            ab_median: parse_f64(&path, "ab_median", f(5))?,
            ab_q3: parse_f64(&path, "ab_q3", f(6))?,
            agent_entropy_mean: parse_f64(&path, "agent_entropy_mean", f(7))?,
            n_choice_changes_window: parse_u64(&path, "n_choice_changes_window", f(8))?,
            n_label_switches_window: parse_u64(&path, "n_label_switches_window", f(9))?,
            t_last_choice_change: parse_opt_u64(&path, "t_last_choice_change", f(10))?,
            per_label_sw: (0..nl)
                .map(|l| parse_opt_f64(&path, "sw_label", f(11 + l)))
                .collect::<Result<_, _>>()?,
            mutual_information: (0..ni)
                .map(|i| parse_opt_f64(&path, "mi_issue", f(11 + nl + i)))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(records)
}

pub fn read_snapshots(dir: &Path) -> Result<Vec<SnapshotRecord>, BundleError> {
    let path = dir.join(SNAPSHOTS_FILE);
    let file = File::open(&path).map_err(|e| BundleError::io(&path, e))?;
    let mut snaps = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BundleError::io(&path, e))?;
        if line.is_empty() {
            continue;
        }
        snaps.push(serde_json::from_str(&line).map_err(|e| {
            BundleError::malformed(&path, format!("line {}: {e}", n + 1))
        })?);
    }
    Ok(snaps)
}

pub fn read_regime(dir: &Path) -> Result<crate::analysis::RegimeReport, BundleError> {
    let path = dir.join(REGIME_FILE);
    serde_json::from_str(&read_to_string(&path)?)
        .map_err(|e| BundleError::malformed(&path, e.to_string()))
}

/// Reads a complete bundle back into the exact in-memory form that wrote it.
pub fn read_bundle(dir: &Path) -> Result<RunOutput, BundleError> {
    let manifest = read_manifest(dir)?;
    let records = read_metrics(dir, manifest.config.num_labels, manifest.config.num_issues)?;
    let snapshots = read_snapshots(dir)?;
    let regime = read_regime(dir)?;
    Ok(RunOutput { manifest, records, snapshots, regime })
}

/// True when `dir` already holds a complete bundle whose manifest matches
/// `expected` exactly; such runs can be skipped on resume.
pub fn is_complete_bundle(dir: &Path, expected: &RunManifest) -> bool {
    BUNDLE_FILES.iter().all(|f| dir.join(f).is_file())
        && read_manifest(dir).map(|m| &m == expected).unwrap_or(false)
}
