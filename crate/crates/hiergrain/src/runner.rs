//! Drives one full simulation run and assembles its outputs in memory.
//!
//! The run loop is strictly sequential. Replicate-level fan-out lives in
//! [`run_ensemble`], which hands every replicate its own derived seed, so the
//! set of outputs is a pure function of (config, master seed) regardless of
//! worker count.

use serde::{Deserialize, Serialize};

use crate::analysis::{classify_regime, RegimeReport, Thresholds};
use crate::config::{RunManifest, SimulationConfig};
use crate::engine::{step, StepScratch};
use crate::metrics::{add_preference_mass, collect, MetricsRecord, RunCounters};
use crate::population::Population;
use crate::seeds::{derive_replicate_seed, run_rng};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Also dump every agent's label and strength row at each snapshot.
    pub full_snapshots: bool,
    pub thresholds: Thresholds,
}

/// Histogram of preferred-choice mass among one label's members,
/// `[issue][choice]`, tie mass split. Sums to the member count per issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSnapshot {
    pub label: u16,
    pub n_members: u32,
    pub hist: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDump {
    pub id: u32,
    pub label: Option<u16>,
    pub strengths: Vec<f64>,
}

/// Population state at one snapshot instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub timestep: u64,
    pub labels: Vec<LabelSnapshot>,
    /// Preferred-choice mass over the whole population, labeled or not,
    /// `[issue][choice]`; sums to pop size per issue.
    pub global: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentDump>>,
}

/// Everything one run produces; serialized to disk by [`crate::bundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub records: Vec<MetricsRecord>,
    pub snapshots: Vec<SnapshotRecord>,
    pub regime: RegimeReport,
}

pub fn take_snapshot(
    pop: &Population,
    config: &SimulationConfig,
    full: bool,
) -> SnapshotRecord {
    let (nl, ni, nc) = (
        config.num_labels as usize,
        pop.num_issues as usize,
        pop.num_choices as usize,
    );
    let mut label_hist = vec![vec![vec![0.0f64; nc]; ni]; nl];
    let mut members = vec![0u32; nl];
    let mut global = vec![vec![0.0f64; nc]; ni];
    for agent in &pop.agents {
        for issue in 0..ni {
            let row = agent.issue_row(issue as u16, nc as u16);
            add_preference_mass(row, 1.0, &mut global[issue]);
            if let Some(l) = agent.label {
                add_preference_mass(row, 1.0, &mut label_hist[l as usize][issue]);
            }
        }
        if let Some(l) = agent.label {
            members[l as usize] += 1;
        }
    }
    SnapshotRecord {
        timestep: pop.timestep,
        labels: label_hist
            .into_iter()
            .zip(members)
            .enumerate()
            .map(|(label, (hist, n_members))| LabelSnapshot {
                label: label as u16,
                n_members,
                hist,
            })
            .collect(),
        global,
        agents: full.then(|| {
            pop.agents
                .iter()
                .map(|a| AgentDump {
                    id: a.id,
                    label: a.label,
                    strengths: a.strengths().to_vec(),
                })
                .collect()
        }),
    }
}

/// Executes the run described by `manifest` to completion.
pub fn run_simulation(manifest: RunManifest, options: &RunOptions) -> RunOutput {
    debug_assert_eq!(
        manifest.run_seed, manifest.config.seed,
        "manifest seed fields out of sync"
    );
    let config = manifest.config.clone();
    let mut rng = run_rng(config.seed);
    let mut pop = Population::init(&config, &mut rng);
    let mut counters = RunCounters::default();
    let mut scratch = StepScratch::default();

    let n_records = (config.max_timesteps / config.snapshot_interval) as usize + 1;
    let mut records = Vec::with_capacity(n_records);
    let mut snapshots = Vec::with_capacity(n_records);
    records.push(collect(&pop, &config, &mut counters));
    snapshots.push(take_snapshot(&pop, &config, options.full_snapshots));

    for t in 1..=config.max_timesteps {
        let report = step(&mut pop, &config, &mut rng, &mut scratch);
        counters.absorb(&report);
        if t % config.snapshot_interval == 0 {
            records.push(collect(&pop, &config, &mut counters));
            snapshots.push(take_snapshot(&pop, &config, options.full_snapshots));
        }
    }

    let regime = classify_regime(&records, &config, &options.thresholds);
    RunOutput { manifest, records, snapshots, regime }
}

/// Builds the manifest for replicate `replicate_index` of cell `cell_index`
/// under `master_seed`; the embedded config carries the derived seed.
pub fn replicate_manifest(
    config: &SimulationConfig,
    master_seed: u64,
    cell_index: u64,
    replicate_index: u32,
) -> RunManifest {
    let run_seed = derive_replicate_seed(master_seed, cell_index, replicate_index);
    let mut config = config.clone();
    config.seed = run_seed;
    RunManifest::new(config, master_seed, cell_index, replicate_index, run_seed)
}

/// Runs `replicates` independent replicates of one cell. With the `parallel`
/// feature the replicates fan out over the rayon pool; outputs are ordered by
/// replicate index either way.
pub fn run_ensemble(
    config: &SimulationConfig,
    master_seed: u64,
    cell_index: u64,
    replicates: u32,
    options: &RunOptions,
) -> Vec<RunOutput> {
    let manifests: Vec<RunManifest> = (0..replicates)
        .map(|rep| replicate_manifest(config, master_seed, cell_index, rep))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        manifests
            .into_par_iter()
            .map(|m| run_simulation(m, options))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        manifests
            .into_iter()
            .map(|m| run_simulation(m, options))
            .collect()
    }
}
