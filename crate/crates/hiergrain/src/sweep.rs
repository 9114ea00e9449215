//! Parameter-grid sweeps over the simulation.
//!
//! A grid file lists values for any of the nine model parameters (scalar or
//! list, scalars meaning a single-value axis) plus scalar run controls. The
//! grid expands to cells in lexicographic order with the earliest-declared
//! axis varying slowest, and every (cell, replicate) pair gets its own
//! derived seed, so the resulting output tree depends only on the grid and
//! the master seed — not on worker count or scheduling.
//!
//! Layout under the output root: `cell-<0-padded>/rep-<0-padded>/` bundles,
//! a `journal.log` (appended live, rewritten canonically once the sweep
//! finishes), and three aggregate tables built after all runs complete.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use crate::analysis::Regime;
use crate::bundle::{is_complete_bundle, read_metrics, read_regime, write_bundle};
use crate::config::{RunManifest, SimulationConfig};
use crate::runner::{replicate_manifest, run_simulation, RunOptions};

pub const JOURNAL_FILE: &str = "journal.log";
pub const REGIME_TABLE_FILE: &str = "regime_table.csv";
pub const REGIME_MAJORITY_FILE: &str = "regime_majority.csv";
pub const MEAN_TRAJECTORIES_FILE: &str = "mean_trajectories.csv";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("grid parse error: {0}")]
    Parse(String),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SweepError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }
}

/// A fully resolved sweep: one list of values per model parameter, in the
/// parameter table's declared order, plus run controls shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub pop_size: Vec<u32>,
    pub num_labels: Vec<u16>,
    pub num_issues: Vec<u16>,
    pub num_choices: Vec<u16>,
    pub multi_issue_discourse: Vec<u32>,
    pub strength_of_influence: Vec<f64>,
    pub ignoring: Vec<bool>,
    pub prob_dropping_label: Vec<f64>,
    pub prob_adopting_label: Vec<f64>,

    pub replicates: u32,
    pub master_seed: u64,
    pub init_strength_max: f64,
    pub max_timesteps: u64,
    pub snapshot_interval: u64,
    pub equilibrium_window: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let d = SimulationConfig::default();
        Self {
            pop_size: vec![d.pop_size],
            num_labels: vec![d.num_labels],
            num_issues: vec![d.num_issues],
            num_choices: vec![d.num_choices],
            multi_issue_discourse: vec![d.multi_issue_discourse],
            strength_of_influence: vec![d.strength_of_influence],
            ignoring: vec![d.ignoring],
            prob_dropping_label: vec![d.prob_dropping_label],
            prob_adopting_label: vec![d.prob_adopting_label],
            replicates: 10,
            master_seed: 0,
            init_strength_max: d.init_strength_max,
            max_timesteps: d.max_timesteps,
            snapshot_interval: d.snapshot_interval,
            equilibrium_window: d.equilibrium_window,
        }
    }
}

/// Scalar-or-list TOML values; a bare scalar is a one-element axis.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v],
            Self::Many(v) => v,
        }
    }
}

/// `true`/`false` or `"on"`/`"off"`, matching the config file convention.
#[derive(Debug)]
struct OnOff(bool);

impl<'de> Deserialize<'de> for OnOff {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = OnOff;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a boolean or the string \"on\"/\"off\"")
            }
            fn visit_bool<E: serde::de::Error>(self, b: bool) -> Result<OnOff, E> {
                Ok(OnOff(b))
            }
            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<OnOff, E> {
                match s {
                    "on" => Ok(OnOff(true)),
                    "off" => Ok(OnOff(false)),
                    other => Err(E::custom(format!(
                        "expected \"on\" or \"off\", found {other:?}"
                    ))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
struct GridFile {
    pop_size: Option<OneOrMany<u32>>,
    num_labels: Option<OneOrMany<u16>>,
    num_issues: Option<OneOrMany<u16>>,
    num_choices: Option<OneOrMany<u16>>,
    multi_issue_discourse: Option<OneOrMany<u32>>,
    strength_of_influence: Option<OneOrMany<f64>>,
    ignoring: Option<OneOrMany<OnOff>>,
    prob_dropping_label: Option<OneOrMany<f64>>,
    #[serde(rename = "prob-adopting-a-label")]
    prob_adopting_label: Option<OneOrMany<f64>>,
    replicates: Option<u32>,
    master_seed: Option<u64>,
    init_strength_max: Option<f64>,
    max_timesteps: Option<u64>,
    snapshot_interval: Option<u64>,
    equilibrium_window: Option<u64>,
}

impl SweepGrid {
    pub fn from_toml_str(text: &str) -> Result<Self, SweepError> {
        let file: GridFile =
            toml::from_str(text).map_err(|e| SweepError::Parse(e.to_string()))?;
        let d = Self::default();
        let grid = Self {
            pop_size: file.pop_size.map_or(d.pop_size, OneOrMany::into_vec),
            num_labels: file.num_labels.map_or(d.num_labels, OneOrMany::into_vec),
            num_issues: file.num_issues.map_or(d.num_issues, OneOrMany::into_vec),
            num_choices: file.num_choices.map_or(d.num_choices, OneOrMany::into_vec),
            multi_issue_discourse: file
                .multi_issue_discourse
                .map_or(d.multi_issue_discourse, OneOrMany::into_vec),
            strength_of_influence: file
                .strength_of_influence
                .map_or(d.strength_of_influence, OneOrMany::into_vec),
            ignoring: file
                .ignoring
                .map_or(d.ignoring, |v| v.into_vec().into_iter().map(|o| o.0).collect()),
            prob_dropping_label: file
                .prob_dropping_label
                .map_or(d.prob_dropping_label, OneOrMany::into_vec),
            prob_adopting_label: file
                .prob_adopting_label
                .map_or(d.prob_adopting_label, OneOrMany::into_vec),
            replicates: file.replicates.unwrap_or(d.replicates),
            master_seed: file.master_seed.unwrap_or(d.master_seed),
            init_strength_max: file.init_strength_max.unwrap_or(d.init_strength_max),
            max_timesteps: file.max_timesteps.unwrap_or(d.max_timesteps),
            snapshot_interval: file.snapshot_interval.unwrap_or(d.snapshot_interval),
            equilibrium_window: file.equilibrium_window.unwrap_or(d.equilibrium_window),
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<(), SweepError> {
        for (name, len) in [
            ("pop-size", self.pop_size.len()),
            ("num-labels", self.num_labels.len()),
            ("num-issues", self.num_issues.len()),
            ("num-choices", self.num_choices.len()),
            ("multi-issue-discourse", self.multi_issue_discourse.len()),
            ("strength-of-influence", self.strength_of_influence.len()),
            ("ignoring", self.ignoring.len()),
            ("prob-dropping-label", self.prob_dropping_label.len()),
            ("prob-adopting-a-label", self.prob_adopting_label.len()),
        ] {
            if len == 0 {
                return Err(SweepError::Invalid(format!("{name} list must not be empty")));
            }
        }
        if self.replicates == 0 {
            return Err(SweepError::Invalid("replicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.pop_size.len()
            * self.num_labels.len()
            * self.num_issues.len()
            * self.num_choices.len()
            * self.multi_issue_discourse.len()
            * self.strength_of_influence.len()
            * self.ignoring.len()
            * self.prob_dropping_label.len()
            * self.prob_adopting_label.len()
    }

    /// Expands the grid into per-cell configs, lexicographically with the
    /// earliest-declared axis varying slowest; the config `seed` field is
    /// filled per replicate at schedule time.
    pub fn expand(&self) -> Result<Vec<SimulationConfig>, SweepError> {
        let mut cells = Vec::with_capacity(self.n_cells());
        for &pop_size in &self.pop_size {
            for &num_labels in &self.num_labels {
                for &num_issues in &self.num_issues {
                    for &num_choices in &self.num_choices {
                        for &multi_issue_discourse in &self.multi_issue_discourse {
                            for &strength_of_influence in &self.strength_of_influence {
                                for &ignoring in &self.ignoring {
                                    for &prob_dropping_label in &self.prob_dropping_label {
                                        for &prob_adopting_label in &self.prob_adopting_label {
                                            cells.push(SimulationConfig {
                                                pop_size,
                                                num_labels,
                                                num_issues,
                                                num_choices,
                                                multi_issue_discourse,
                                                strength_of_influence,
                                                ignoring,
                                                prob_dropping_label,
                                                prob_adopting_label,
                                                init_strength_max: self.init_strength_max,
                                                max_timesteps: self.max_timesteps,
                                                snapshot_interval: self.snapshot_interval,
                                                equilibrium_window: self.equilibrium_window,
                                                seed: 0,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for (i, cell) in cells.iter().enumerate() {
            let violations = cell.violations();
            if !violations.is_empty() {
                return Err(SweepError::Invalid(format!(
                    "cell {i}: {}",
                    violations.join("; ")
                )));
            }
        }
        Ok(cells)
    }
}

pub fn cell_dir_name(cell_index: u64) -> String {
    format!("cell-{cell_index:04}")
}

pub fn replicate_dir_name(replicate: u32) -> String {
    format!("rep-{replicate:02}")
}

#[derive(Debug, Clone)]
struct RunTask {
    cell_index: u64,
    replicate: u32,
    manifest: RunManifest,
    dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TaskStatus {
    Executed,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFailure {
    pub cell_index: u64,
    pub replicate: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSummary {
    pub n_cells: usize,
    pub n_executed: usize,
    pub n_skipped: usize,
    pub failures: Vec<TaskFailure>,
}

fn journal_line(task: &RunTask, status: &TaskStatus) -> String {
    let head = format!(
        "cell={:04} rep={:02} seed={}",
        task.cell_index, task.replicate, task.manifest.run_seed
    );
    match status {
        TaskStatus::Executed => format!("ok {head}"),
        TaskStatus::Skipped => format!("skip {head}"),
        TaskStatus::Failed(msg) => format!("fail {head}: {msg}"),
    }
}

fn execute_tasks(
    tasks: &[RunTask],
    options: &RunOptions,
    jobs: usize,
    journal_path: &Path,
) -> Result<Vec<TaskStatus>, SweepError> {
    let journal = OpenOptions::new()
        .create(true)
        .append(true)
        .open(journal_path)
        .map_err(|e| SweepError::io(journal_path, e))?;
    let journal = Mutex::new(BufWriter::new(journal));
    let statuses: Mutex<Vec<Option<TaskStatus>>> = Mutex::new(vec![None; tasks.len()]);

    let run_one = |i: usize| {
        let task = &tasks[i];
        let status = if is_complete_bundle(&task.dir, &task.manifest) {
            TaskStatus::Skipped
        } else {
            match std::panic::catch_unwind(|| {
                run_simulation(task.manifest.clone(), options)
            }) {
                Ok(output) => match write_bundle(&task.dir, &output) {
                    Ok(()) => TaskStatus::Executed,
                    Err(e) => TaskStatus::Failed(e.to_string()),
                },
                Err(_) => TaskStatus::Failed("run panicked".into()),
            }
        };
        {
            let mut j = journal.lock().unwrap();
            let _ = writeln!(j, "{}", journal_line(task, &status));
            let _ = j.flush();
        }
        statuses.lock().unwrap()[i] = Some(status);
    };

    #[cfg(feature = "parallel")]
    if jobs != 1 {
        use rayon::prelude::*;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if jobs > 0 {
            builder = builder.num_threads(jobs);
        }
        let pool = builder
            .build()
            .map_err(|e| SweepError::Invalid(format!("worker pool: {e}")))?;
        pool.install(|| (0..tasks.len()).into_par_iter().for_each(run_one));
        return Ok(statuses
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|s| s.expect("every task ran"))
            .collect());
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;

    (0..tasks.len()).for_each(run_one);
    Ok(statuses
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("every task ran"))
        .collect())
}

/// Rewrites the journal in task order so the final tree is independent of
/// execution interleaving; the live append-only form only matters while the
/// sweep is in flight.
fn canonicalize_journal(
    path: &Path,
    tasks: &[RunTask],
    statuses: &[TaskStatus],
    summary: &SweepSummary,
) -> Result<(), SweepError> {
    let mut text = String::new();
    for (task, status) in tasks.iter().zip(statuses) {
        text.push_str(&journal_line(task, status));
        text.push('\n');
    }
    text.push_str(&format!(
        "complete cells={} executed={} skipped={} failed={}\n",
        summary.n_cells,
        summary.n_executed,
        summary.n_skipped,
        summary.failures.len()
    ));
    std::fs::write(path, text).map_err(|e| SweepError::io(path, e))
}

fn fmt_on_off(b: bool) -> &'static str {
    if b { "on" } else { "off" }
}

fn config_columns(c: &SimulationConfig) -> [String; 9] {
    [
        c.pop_size.to_string(),
        c.num_labels.to_string(),
        c.num_issues.to_string(),
        c.num_choices.to_string(),
        c.multi_issue_discourse.to_string(),
        format!("{}", c.strength_of_influence),
        fmt_on_off(c.ignoring).to_string(),
        format!("{}", c.prob_dropping_label),
        format!("{}", c.prob_adopting_label),
    ]
}

const CONFIG_HEADERS: [&str; 9] = [
    "pop_size",
    "num_labels",
    "num_issues",
    "num_choices",
    "multi_issue_discourse",
    "strength_of_influence",
    "ignoring",
    "prob_dropping_label",
    "prob_adopting_label",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, SweepError> {
    let file = File::create(path).map_err(|e| SweepError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn opt_u64_field(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Builds `regime_table.csv`, `regime_majority.csv` and
/// `mean_trajectories.csv` from the bundles on disk, visiting runs in task
/// order so the aggregate bytes are deterministic.
fn write_aggregates(
    out_root: &Path,
    tasks: &[RunTask],
    statuses: &[TaskStatus],
    cells: &[SimulationConfig],
) -> Result<(), SweepError> {
    let available: Vec<&RunTask> = tasks
        .iter()
        .zip(statuses)
        .filter(|(_, s)| !matches!(s, TaskStatus::Failed(_)))
        .map(|(t, _)| t)
        .collect();

    let table_path = out_root.join(REGIME_TABLE_FILE);
    let mut table = csv_writer(&table_path)?;
    let mut header = vec!["cell".to_string(), "replicate".to_string()];
    header.extend(CONFIG_HEADERS.iter().map(|s| s.to_string()));
    header.extend(
        ["regime", "t_local_align", "t_global_align", "t_equilibrium"]
            .iter()
            .map(|s| s.to_string()),
    );
    table
        .write_record(&header)
        .map_err(|e| SweepError::Invalid(e.to_string()))?;

    let mut regimes_by_cell: HashMap<u64, Vec<Regime>> = HashMap::new();
    for task in &available {
        let regime = match read_regime(&task.dir) {
            Ok(r) => r,
            Err(e) => return Err(SweepError::Invalid(e.to_string())),
        };
        let mut row = vec![task.cell_index.to_string(), task.replicate.to_string()];
        row.extend(config_columns(&task.manifest.config));
        row.push(regime.regime.to_string());
        row.push(opt_u64_field(regime.t_local_align));
        row.push(opt_u64_field(regime.t_global_align));
        row.push(opt_u64_field(regime.t_equilibrium));
        table
            .write_record(&row)
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        regimes_by_cell.entry(task.cell_index).or_default().push(regime.regime);
    }
    table.flush().map_err(|e| SweepError::io(&table_path, e))?;

    let majority_path = out_root.join(REGIME_MAJORITY_FILE);
    let mut majority = csv_writer(&majority_path)?;
    let mut header = vec!["cell".to_string()];
    header.extend(CONFIG_HEADERS.iter().map(|s| s.to_string()));
    header.extend(
        [
            "n_runs",
            "n_independent",
            "n_parallel",
            "n_iterative",
            "n_unclassified",
            "majority_regime",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    majority
        .write_record(&header)
        .map_err(|e| SweepError::Invalid(e.to_string()))?;
    for (cell_index, config) in cells.iter().enumerate() {
        let Some(regimes) = regimes_by_cell.get(&(cell_index as u64)) else {
            continue;
        };
        let count =
            |r: Regime| regimes.iter().filter(|&&x| x == r).count();
        let counts = [
            (Regime::Independent, count(Regime::Independent)),
            (Regime::Parallel, count(Regime::Parallel)),
            (Regime::Iterative, count(Regime::Iterative)),
            (Regime::Unclassified, count(Regime::Unclassified)),
        ];
        // plurality vote; ties resolve to the earliest listed regime
        let mut winner = counts[0];
        for c in &counts[1..] {
            if c.1 > winner.1 {
                winner = *c;
            }
        }
        let winner = winner.0;
        let mut row = vec![cell_index.to_string()];
        row.extend(config_columns(config));
        row.push(regimes.len().to_string());
        for (_, n) in counts {
            row.push(n.to_string());
        }
        row.push(winner.to_string());
        majority
            .write_record(&row)
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
    }
    majority.flush().map_err(|e| SweepError::io(&majority_path, e))?;

    let traj_path = out_root.join(MEAN_TRAJECTORIES_FILE);
    let mut traj = csv_writer(&traj_path)?;
    traj.write_record([
        "cell",
        "timestep",
        "n_runs",
        "mean_sw_index",
        "mean_cosine_index",
        "mean_mi_mean",
    ])
    .map_err(|e| SweepError::Invalid(e.to_string()))?;
    for (cell_index, config) in cells.iter().enumerate() {
        let runs: Vec<&&RunTask> = available
            .iter()
            .filter(|t| t.cell_index == cell_index as u64)
            .collect();
        if runs.is_empty() {
            continue;
        }
        let mut all_records = Vec::with_capacity(runs.len());
        for task in &runs {
            let records = read_metrics(&task.dir, config.num_labels, config.num_issues)
                .map_err(|e| SweepError::Invalid(e.to_string()))?;
            all_records.push(records);
        }
        let n_rows = all_records[0].len();
        for row_idx in 0..n_rows {
            let timestep = all_records[0][row_idx].timestep;
            let mean_of = |get: &dyn Fn(&crate::metrics::MetricsRecord) -> Option<f64>| {
                let vals: Vec<f64> = all_records
                    .iter()
                    .filter_map(|records| get(&records[row_idx]))
                    .collect();
                if vals.is_empty() {
                    String::new()
                } else {
                    format!("{}", vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            traj.write_record([
                cell_index.to_string(),
                timestep.to_string(),
                runs.len().to_string(),
                mean_of(&|r| r.sw_index),
                mean_of(&|r| r.cosine_index),
                mean_of(&|r| r.mutual_information_mean),
            ])
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        }
    }
    traj.flush().map_err(|e| SweepError::io(&traj_path, e))
}

/// Runs the whole grid under `out_root`. Already-complete bundles (matching
/// manifest, all four files present) are skipped, so an interrupted sweep
/// resumes where it stopped. `jobs` = 0 uses one worker per core; failures
/// abort only the affected run and are reported in the summary and journal.
pub fn run_sweep(
    grid: &SweepGrid,
    out_root: &Path,
    jobs: usize,
    options: &RunOptions,
) -> Result<SweepSummary, SweepError> {
    let cells = grid.expand()?;
    std::fs::create_dir_all(out_root).map_err(|e| SweepError::io(out_root, e))?;

    let mut tasks = Vec::with_capacity(cells.len() * grid.replicates as usize);
    for (cell_index, cell) in cells.iter().enumerate() {
        let cell_index = cell_index as u64;
        for replicate in 0..grid.replicates {
            let manifest =
                replicate_manifest(cell, grid.master_seed, cell_index, replicate);
            let dir = out_root
                .join(cell_dir_name(cell_index))
                .join(replicate_dir_name(replicate));
            tasks.push(RunTask { cell_index, replicate, manifest, dir });
        }
    }

    let journal_path = out_root.join(JOURNAL_FILE);
    let statuses = execute_tasks(&tasks, options, jobs, &journal_path)?;

    let failures: Vec<TaskFailure> = tasks
        .iter()
        .zip(&statuses)
        .filter_map(|(t, s)| match s {
            TaskStatus::Failed(msg) => Some(TaskFailure {
                cell_index: t.cell_index,
                replicate: t.replicate,
                message: msg.clone(),
            }),
            _ => None,
        })
        .collect();
    let summary = SweepSummary {
        n_cells: cells.len(),
        n_executed: statuses.iter().filter(|s| **s == TaskStatus::Executed).count(),
        n_skipped: statuses.iter().filter(|s| **s == TaskStatus::Skipped).count(),
        failures,
    };

    write_aggregates(out_root, &tasks, &statuses, &cells)?;
    canonicalize_journal(&journal_path, &tasks, &statuses, &summary)?;
    Ok(summary)
}
