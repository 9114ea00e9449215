//! Label-bounded opinion dynamics with discrete actions.
//!
//! Agents hold additive strength tables over (issue, choice) cells and act on
//! the argmax. Labels gate who influences whom: same-label exchanges push
//! hard across several issues, cross-label contact is either ignored or a
//! faint single-issue nudge, and agents migrate between labels at low rates.
//! The crate provides the sequential engine, snapshot metrics, regime and
//! phase detection, deterministic parameter sweeps, and plot emission; the
//! `hiergrain` binary wraps these as `simulate`, `sweep`, `analyze`, `plot`.

pub mod analysis;
pub mod bundle;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod plot;
pub mod population;
pub mod runner;
pub mod seeds;
pub mod sweep;

pub use analysis::{classify_regime, Regime, RegimeReport, Thresholds};
pub use config::{RunManifest, SimulationConfig};
pub use engine::{step, StepReport, StepScratch};
pub use metrics::MetricsRecord;
pub use population::{AgentState, Population};
pub use runner::{
    replicate_manifest, run_ensemble, run_simulation, RunOptions, RunOutput,
};
pub use seeds::{derive_replicate_seed, run_rng};
pub use sweep::{run_sweep, SweepGrid, SweepSummary};
