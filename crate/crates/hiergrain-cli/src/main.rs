//! Command-line front end: `simulate`, `sweep`, `analyze`, `plot`.
//!
//! Exit codes: 0 on success, 1 for usage or configuration problems (bad
//! flags, malformed config/grid/thresholds files, out-of-range requests),
//! 2 for runtime failures (I/O, corrupt bundles, failed sweep runs).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hiergrain::analysis::Thresholds;
use hiergrain::bundle::{
    read_bundle, read_manifest, read_metrics, write_bundle, REGIME_FILE,
};
use hiergrain::plot::{
    alignment_trajectory, barrier_trajectory, choice_histogram, render_svg, snapshot_at,
    PlotError, PlotSpec,
};
use hiergrain::runner::{run_simulation, RunOptions};
use hiergrain::sweep::{run_sweep, SweepGrid, JOURNAL_FILE};
use hiergrain::{classify_regime, RunManifest, SimulationConfig};

/// Default output root when `--out` is not given: `$HIERGRAIN_OUT`, falling
/// back to the current directory.
const OUT_ENV: &str = "HIERGRAIN_OUT";

#[derive(Parser)]
#[command(
    name = "hiergrain",
    version,
    about = "Label-bounded opinion dynamics: simulate, sweep, analyze, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its output bundle
    Simulate(SimulateArgs),
    /// Expand a parameter grid and run every cell with replicates
    Sweep(SweepArgs),
    /// Recompute the regime report of an existing bundle from its metrics
    Analyze(AnalyzeArgs),
    /// Render trajectory and histogram figures from bundles
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config file (TOML); omitted keys take their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the config's random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's timestep budget
    #[arg(long, value_name = "N")]
    max_timesteps: Option<u64>,
    /// Bundle directory (default: <out-root>/run)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dump every agent's state at each snapshot instant
    #[arg(long)]
    full_snapshots: bool,
    /// Regime-classification thresholds file (TOML)
    #[arg(long, value_name = "FILE")]
    thresholds: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file (TOML): model parameters take scalars or lists
    #[arg(long, value_name = "FILE")]
    grid: Option<PathBuf>,
    /// Override the grid's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the grid's per-run timestep budget
    #[arg(long, value_name = "N")]
    max_timesteps: Option<u64>,
    /// Sweep root directory (default: <out-root>/sweep)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for replicate fan-out; 0 means one per core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Dump every agent's state at each snapshot instant
    #[arg(long)]
    full_snapshots: bool,
    /// Regime-classification thresholds file (TOML)
    #[arg(long, value_name = "FILE")]
    thresholds: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Bundle directory produced by `simulate` or `sweep`
    run_dir: PathBuf,
    /// Regime-classification thresholds file (TOML)
    #[arg(long, value_name = "FILE")]
    thresholds: Option<PathBuf>,
    /// Also rewrite the bundle's regime.json with the recomputed report
    #[arg(long)]
    write: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Bundle directories; trajectories average across them
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    /// Figure directory (default: <out-root>/plots)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also render preferred-choice histograms at this snapshot instant
    /// (repeatable); taken from the first bundle
    #[arg(long = "histogram-at", value_name = "T")]
    histogram_at: Vec<u64>,
    /// Restrict histograms to one issue (default: all issues)
    #[arg(long, value_name = "I")]
    issue: Option<u16>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl std::fmt::Display) -> Self {
        Self::Usage(msg.to_string())
    }

    fn runtime(msg: impl std::fmt::Display) -> Self {
        Self::Runtime(msg.to_string())
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(path: Option<&Path>) -> Result<SimulationConfig, CliError> {
    let Some(path) = path else {
        return Ok(SimulationConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    SimulationConfig::from_toml_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn load_thresholds(path: Option<&Path>) -> Result<Thresholds, CliError> {
    let Some(path) = path else {
        return Ok(Thresholds::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Thresholds::from_toml_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mt) = args.max_timesteps {
        config.max_timesteps = mt;
    }
    let config = config.validated().map_err(CliError::usage)?;
    let thresholds = load_thresholds(args.thresholds.as_deref())?;

    let dir = args.out.unwrap_or_else(|| out_root().join("run"));
    let seed = config.seed;
    let manifest = RunManifest::new(config, seed, 0, 0, seed);
    let options = RunOptions { full_snapshots: args.full_snapshots, thresholds };
    let output = run_simulation(manifest, &options);
    write_bundle(&dir, &output).map_err(CliError::runtime)?;
    println!(
        "wrote {} ({} records, regime {})",
        dir.display(),
        output.records.len(),
        output.regime.regime
    );
    Ok(())
}

fn load_grid(path: Option<&Path>) -> Result<SweepGrid, CliError> {
    let Some(path) = path else {
        return Ok(SweepGrid::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    SweepGrid::from_toml_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut grid = load_grid(args.grid.as_deref())?;
    if let Some(seed) = args.seed {
        grid.master_seed = seed;
    }
    if let Some(mt) = args.max_timesteps {
        grid.max_timesteps = mt;
    }
    let thresholds = load_thresholds(args.thresholds.as_deref())?;
    let root = args.out.unwrap_or_else(|| out_root().join("sweep"));

    let options = RunOptions { full_snapshots: args.full_snapshots, thresholds };
    let summary = run_sweep(&grid, &root, args.jobs, &options)
        .map_err(|e| match e {
            hiergrain::sweep::SweepError::Io { .. } => CliError::runtime(e),
            other => CliError::usage(other),
        })?;
    println!(
        "{}: {} cells, {} runs executed, {} skipped, {} failed",
        root.display(),
        summary.n_cells,
        summary.n_executed,
        summary.n_skipped,
        summary.failures.len()
    );
    if !summary.failures.is_empty() {
        return Err(CliError::runtime(format!(
            "{} run(s) failed; see {}",
            summary.failures.len(),
            root.join(JOURNAL_FILE).display()
        )));
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let thresholds = load_thresholds(args.thresholds.as_deref())?;
    let manifest = read_manifest(&args.run_dir).map_err(CliError::runtime)?;
    let records = read_metrics(
        &args.run_dir,
        manifest.config.num_labels,
        manifest.config.num_issues,
    )
    .map_err(CliError::runtime)?;
    let report = classify_regime(&records, &manifest.config, &thresholds);
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::runtime(format!("serializing report: {e}")))?;
    text.push('\n');
    print!("{text}");
    if args.write {
        let path = args.run_dir.join(REGIME_FILE);
        fs::write(&path, &text)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn write_figure(dir: &Path, stem: &str, spec: &PlotSpec) -> Result<(), CliError> {
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, spec.to_json())
        .map_err(|e| CliError::runtime(format!("{}: {e}", json_path.display())))?;
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&svg_path, render_svg(spec))
        .map_err(|e| CliError::runtime(format!("{}: {e}", svg_path.display())))?;
    Ok(())
}

fn plot_error(e: PlotError) -> CliError {
    match e {
        PlotError::UnknownTimestep { .. } | PlotError::IssueOutOfRange { .. } => {
            CliError::usage(e)
        }
        other => CliError::runtime(other),
    }
}

fn cmd_plot(args: PlotArgs) -> Result<(), CliError> {
    let mut bundles = Vec::with_capacity(args.run_dirs.len());
    for dir in &args.run_dirs {
        bundles.push(read_bundle(dir).map_err(CliError::runtime)?);
    }
    let dir = args.out.unwrap_or_else(|| out_root().join("plots"));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;

    let runs: Vec<&[hiergrain::MetricsRecord]> =
        bundles.iter().map(|b| b.records.as_slice()).collect();
    let regime = &bundles[0].regime;
    let n = bundles.len();
    let suffix = if n > 1 { format!(" (mean of {n} runs)") } else { String::new() };

    let spec = alignment_trajectory(
        &runs,
        Some(regime),
        &format!("Alignment indices{suffix}"),
    )
    .map_err(plot_error)?;
    write_figure(&dir, "alignment", &spec)?;

    let spec = barrier_trajectory(&runs, &format!("Activation barrier quartiles{suffix}"))
        .map_err(plot_error)?;
    write_figure(&dir, "barriers", &spec)?;

    let first = &bundles[0];
    let num_issues = first.manifest.config.num_issues;
    for &t in &args.histogram_at {
        let snapshot = snapshot_at(&first.snapshots, t).map_err(plot_error)?;
        let issues: Vec<u16> = match args.issue {
            Some(i) => vec![i],
            None => (0..num_issues).collect(),
        };
        for issue in issues {
            let spec = choice_histogram(
                snapshot,
                issue,
                &format!("Preferred choices at t={t}, issue {issue}"),
            )
            .map_err(plot_error)?;
            write_figure(&dir, &format!("histogram-t{t}-issue{issue}"), &spec)?;
        }
    }
    println!("wrote figures to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are successes; anything else is a
            // usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
