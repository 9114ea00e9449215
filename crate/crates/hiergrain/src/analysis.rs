//! Regime classification, phase boundaries, and equilibrium detection over a
//! metric time series.
//!
//! Alignment times are read off the snapshot records. Local alignment is the
//! first record whose diversity index falls below `eps_sw`. Global alignment
//! is the first record from which the cosine index stays above `1 - eps_cos`
//! through the end of the run: a freshly initialized population has
//! statistically identical labels and a cosine within noise of 1, so a bare
//! first-crossing rule would date "alignment" to timestep 0. Requiring the
//! crossing to hold captures alignment as a reached state rather than an
//! artifact of the start.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimulationConfig;
use crate::engine::StepReport;
use crate::metrics::MetricsRecord;

#[derive(Debug, Error)]
pub enum ThresholdsError {
    #[error("thresholds parse error: {0}")]
    Parse(String),
    #[error("invalid thresholds: {0}")]
    Invalid(String),
}

/// Tunable cutoffs for regime detection. Defaults separate the three regimes
/// cleanly on the reference configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct Thresholds {
    pub eps_sw: f64,
    pub eps_cos: f64,
    pub rebound_delta: f64,
    pub plateau_tol: f64,
    pub plateau_window: u64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            eps_sw: 0.05,
            eps_cos: 0.01,
            rebound_delta: 0.05,
            plateau_tol: 0.01,
            plateau_window: 1000,
        }
    }
}

impl Thresholds {
    pub fn from_toml_str(text: &str) -> Result<Self, ThresholdsError> {
        let t: Thresholds =
            toml::from_str(text).map_err(|e| ThresholdsError::Parse(e.to_string()))?;
        for (name, v) in [
            ("eps-sw", t.eps_sw),
            ("eps-cos", t.eps_cos),
            ("rebound-delta", t.rebound_delta),
            ("plateau-tol", t.plateau_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ThresholdsError::Invalid(format!(
                    "{name} must be positive and finite"
                )));
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Independent,
    Parallel,
    Iterative,
    Unclassified,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Independent => "Independent",
            Regime::Parallel => "Parallel",
            Regime::Iterative => "Iterative",
            Regime::Unclassified => "Unclassified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientPeak {
    pub timestep: u64,
    pub sw_index: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBoundaries {
    pub end_phase_i: u64,
    pub end_phase_ii: u64,
    pub end_phase_iii: u64,
}

/// Per-run classification result, written as regime.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub t_local_align: Option<u64>,
    pub t_global_align: Option<u64>,
    /// Highest diversity reached after local alignment, when it rebounds by
    /// more than `rebound_delta`.
    pub transient_diversity_peak: Option<TransientPeak>,
    pub phase_boundaries: Option<PhaseBoundaries>,
    /// First record instant at which the population had stopped changing
    /// preferred choices for good (confirmed by `equilibrium_window`
    /// change-free steps). Record-aligned so it never precedes the
    /// record-aligned alignment times.
    pub t_equilibrium: Option<u64>,
    pub thresholds_used: Thresholds,
    pub diagnostic: Option<String>,
}

/// (t_local, t_global) per the crate-level rules; either may be absent.
pub fn detect_alignment_times(
    records: &[MetricsRecord],
    thresholds: &Thresholds,
) -> (Option<u64>, Option<u64>) {
    let t_local = records
        .iter()
        .find(|r| r.sw_index.is_some_and(|sw| sw < thresholds.eps_sw))
        .map(|r| r.timestep);
    let aligned =
        |r: &MetricsRecord| r.cosine_index.is_some_and(|c| c > 1.0 - thresholds.eps_cos);
    let mut t_global = None;
    for r in records.iter().rev() {
        if aligned(r) {
            t_global = Some(r.timestep);
        } else {
            break;
        }
    }
    (t_local, t_global)
}

/// Peak of the diversity rebound after local alignment, if the series rises
/// more than `rebound_delta` above its value at `t_local`.
pub fn transient_diversity_peak(
    records: &[MetricsRecord],
    t_local: u64,
    thresholds: &Thresholds,
) -> Option<TransientPeak> {
    let base = records
        .iter()
        .find(|r| r.timestep == t_local)?
        .sw_index?;
    let mut peak: Option<TransientPeak> = None;
    for r in records.iter().filter(|r| r.timestep > t_local) {
        if let Some(sw) = r.sw_index {
            if peak.is_none_or(|p| sw > p.sw_index) {
                peak = Some(TransientPeak { timestep: r.timestep, sw_index: sw });
            }
        }
    }
    peak.filter(|p| p.sw_index > base + thresholds.rebound_delta)
}

/// First timestep after which no preferred-choice change occurs for at least
/// `window` consecutive steps and none thereafter. Exact step-level variant;
/// returns the initial timestep when the whole series is change-free.
pub fn detect_equilibrium(step_reports: &[StepReport], window: u64) -> Option<u64> {
    let last = step_reports.last()?.timestep;
    let first = step_reports.first().expect("nonempty").timestep;
    let t_last_change = step_reports
        .iter()
        .filter(|r| r.n_preferred_choice_changes > 0)
        .map(|r| r.timestep)
        .max()
        .unwrap_or(first.saturating_sub(1));
    (last.saturating_sub(t_last_change) >= window).then_some(t_last_change)
}

/// Equilibrium recovered from snapshot records alone, reported at record
/// granularity: the first record instant at or after the last
/// preferred-choice change.
pub fn equilibrium_from_records(records: &[MetricsRecord], window: u64) -> Option<u64> {
    let last = records.last()?;
    let t_last_change = last.t_last_choice_change.unwrap_or(0);
    if last.timestep.saturating_sub(t_last_change) < window {
        return None;
    }
    records
        .iter()
        .find(|r| r.timestep >= t_last_change)
        .map(|r| r.timestep)
}

/// True when the cosine index stays within `plateau_tol` of itself over the
/// trailing `plateau_window` steps and is defined throughout.
fn cosine_plateaued(records: &[MetricsRecord], thresholds: &Thresholds) -> bool {
    let Some(last) = records.last() else { return false };
    let from = last.timestep.saturating_sub(thresholds.plateau_window);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in records.iter().filter(|r| r.timestep >= from) {
        match r.cosine_index {
            Some(c) => {
                lo = lo.min(c);
                hi = hi.max(c);
            }
            None => return false,
        }
    }
    hi - lo < thresholds.plateau_tol
}

/// Phase boundaries of an iterative run: local alignment ends at `t_local`,
/// the divergence/global-alignment phase ends at `t_global`, re-alignment
/// ends at equilibrium. Distinct and ordered or an error.
pub fn detect_phases(
    t_local: u64,
    t_global: u64,
    t_equilibrium: Option<u64>,
) -> Result<PhaseBoundaries, String> {
    let Some(te) = t_equilibrium else {
        return Err("equilibrium not reached within the run; phase III is open".into());
    };
    if t_local < t_global && t_global < te {
        Ok(PhaseBoundaries { end_phase_i: t_local, end_phase_ii: t_global, end_phase_iii: te })
    } else {
        Err(format!(
            "phase boundaries not strictly increasing: {t_local}, {t_global}, {te}"
        ))
    }
}

/// Classifies one run from its snapshot series. Pure: identical inputs give
/// identical reports.
pub fn classify_regime(
    records: &[MetricsRecord],
    config: &SimulationConfig,
    thresholds: &Thresholds,
) -> RegimeReport {
    let (t_local, t_global) = detect_alignment_times(records, thresholds);
    let t_equilibrium = equilibrium_from_records(records, config.equilibrium_window);
    let peak = t_local.and_then(|tl| transient_diversity_peak(records, tl, thresholds));

    let mut report = RegimeReport {
        regime: Regime::Unclassified,
        t_local_align: t_local,
        t_global_align: t_global,
        transient_diversity_peak: peak,
        phase_boundaries: None,
        t_equilibrium,
        thresholds_used: *thresholds,
        diagnostic: None,
    };

    match (t_local, t_global) {
        (Some(_), None) if cosine_plateaued(records, thresholds) => {
            report.regime = Regime::Independent;
        }
        (Some(tl), Some(tg)) if tg <= tl && peak.is_none() => {
            report.regime = Regime::Parallel;
        }
        (Some(tl), Some(tg)) if tl < tg && peak.is_some() => {
            match detect_phases(tl, tg, t_equilibrium) {
                Ok(b) => {
                    report.regime = Regime::Iterative;
                    report.phase_boundaries = Some(b);
                }
                Err(msg) if t_equilibrium.is_none() => {
                    // iterative shape; the final phase is simply not closed yet
                    report.regime = Regime::Iterative;
                    report.diagnostic = Some(msg);
                }
                Err(msg) => {
                    report.regime = Regime::Unclassified;
                    report.diagnostic = Some(msg);
                }
            }
        }
        _ => {
            report.diagnostic = Some(describe_unclassified(t_local, t_global, peak.is_some()));
        }
    }
    report
}

fn describe_unclassified(
    t_local: Option<u64>,
    t_global: Option<u64>,
    rebound: bool,
) -> String {
    match (t_local, t_global) {
        (None, None) => "neither local nor global alignment reached".into(),
        (None, Some(_)) => "global alignment without local alignment".into(),
        (Some(_), None) => "local alignment only, but cosine did not plateau".into(),
        (Some(tl), Some(tg)) => {
            if tg <= tl {
                format!("global-first ordering (t_global {tg} <= t_local {tl}) but a diversity rebound occurred")
            } else if !rebound {
                format!("local-first ordering (t_local {tl} < t_global {tg}) without a diversity rebound")
            } else {
                "inconsistent alignment pattern".into()
            }
        }
    }
}
