//! End-to-end tests of the `hiergrain` binary: exit codes, determinism of
//! written bundles and sweep trees, and the analyze/plot contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_hiergrain");

const TINY_CONFIG: &str = "\
pop-size = 60
num-labels = 3
num-issues = 2
num-choices = 3
max-timesteps = 1000
snapshot-interval = 200
equilibrium-window = 300
";

const TINY_GRID: &str = "\
pop-size = 40
num-labels = 2
num-issues = 1
num-choices = 2
multi-issue-discourse = 1
strength-of-influence = 5.0
prob-dropping-label = [0.0, 0.01]
replicates = 2
master-seed = 9
max-timesteps = 200
snapshot-interval = 100
equilibrium-window = 100
";

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary must spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

/// All files under `root` as (relative path, bytes), sorted.
fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<PathBuf> =
            fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"], &[])), 0);
    assert_eq!(code(&run(&["--version"], &[])), 0);
    assert_eq!(code(&run(&["simulate", "--help"], &[])), 0);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["simulate", "--frobnicate"], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--frobnicate"));
}

#[test]
fn misspelled_config_key_names_the_key_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "nun-choices = 4\n");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains("nun-choices"), "stderr must name the bad key: {msg}");
}

#[test]
fn out_of_range_value_exits_1_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "num-choices = 1\n");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("num-choices"), "{}", stderr(&out));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, TINY_CONFIG);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out_dir, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let out = run(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                seed,
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(tree(&a), tree(&b), "same seed must give byte-identical bundles");
    assert_ne!(tree(&a), tree(&c), "different seed must change the run");
}

#[test]
fn max_timesteps_zero_writes_the_initial_record_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, TINY_CONFIG);
    let out_dir = dir.path().join("run");
    let out = run(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--max-timesteps",
            "0",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2, "header plus the t=0 row");
}

#[test]
fn env_var_sets_the_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, TINY_CONFIG);
    let out = run(
        &["simulate", "--config", cfg.to_str().unwrap()],
        &[("HIERGRAIN_OUT", dir.path().to_str().unwrap())],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("run").join("manifest.json").is_file());
}

#[test]
fn sweep_tree_is_worker_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    write(&grid, TINY_GRID);
    let (a, b) = (dir.path().join("jobs1"), dir.path().join("jobs2"));
    for (out_dir, jobs) in [(&a, "1"), (&b, "2")] {
        let out = run(
            &[
                "sweep",
                "--grid",
                grid.to_str().unwrap(),
                "--jobs",
                jobs,
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(tree(&a), tree(&b), "jobs=1 and jobs=2 must write identical trees");
    for f in ["journal.log", "regime_table.csv", "regime_majority.csv", "mean_trajectories.csv"]
    {
        assert!(a.join(f).is_file(), "{f} missing from sweep root");
    }
}

#[test]
fn malformed_grid_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    write(&grid, "num-labels = []\n");
    let out = run(&["sweep", "--grid", grid.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("num-labels"), "{}", stderr(&out));
}

#[test]
fn analyze_reproduces_the_stored_regime_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, TINY_CONFIG);
    let run_dir = dir.path().join("run");
    let out = run(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "4",
            "--out",
            run_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&["analyze", run_dir.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stored = fs::read(run_dir.join("regime.json")).unwrap();
    assert_eq!(
        out.stdout, stored,
        "recomputing from metrics.csv must reproduce regime.json exactly"
    );
}

#[test]
fn analyze_missing_bundle_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", dir.path().join("nope").to_str().unwrap()], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("manifest.json"), "{}", stderr(&out));
}

#[test]
fn custom_thresholds_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, TINY_CONFIG);
    let run_dir = dir.path().join("run");
    assert_eq!(
        code(&run(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                run_dir.to_str().unwrap()
            ],
            &[]
        )),
        0
    );
    let th = dir.path().join("strict.toml");
    write(&th, "eps-sw = 0.000001\n");
    let default = run(&["analyze", run_dir.to_str().unwrap()], &[]);
    let strict = run(
        &["analyze", run_dir.to_str().unwrap(), "--thresholds", th.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&strict), 0, "{}", stderr(&strict));
    assert_ne!(default.stdout, strict.stdout);
    let bad = dir.path().join("bad.toml");
    write(&bad, "eps-sww = 0.1\n");
    let out = run(
        &["analyze", run_dir.to_str().unwrap(), "--thresholds", bad.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("eps-sww"), "{}", stderr(&out));
}

#[test]
fn plot_emits_figures_and_validates_timesteps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, TINY_CONFIG);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for (run_dir, seed) in [(&r1, "1"), (&r2, "2")] {
        assert_eq!(
            code(&run(
                &[
                    "simulate",
                    "--config",
                    cfg.to_str().unwrap(),
                    "--seed",
                    seed,
                    "--out",
                    run_dir.to_str().unwrap()
                ],
                &[]
            )),
            0
        );
    }
    let plots = dir.path().join("plots");
    let out = run(
        &[
            "plot",
            r1.to_str().unwrap(),
            r2.to_str().unwrap(),
            "--out",
            plots.to_str().unwrap(),
            "--histogram-at",
            "400",
            "--issue",
            "0",
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["alignment.json", "alignment.svg", "barriers.svg", "histogram-t400-issue0.svg"] {
        assert!(plots.join(f).is_file(), "{f} missing");
    }
    let svg = fs::read_to_string(plots.join("alignment.svg")).unwrap();
    assert!(svg.starts_with("<svg "));

    // an instant that was never snapshotted is refused with the available ones
    let out = run(
        &[
            "plot",
            r1.to_str().unwrap(),
            "--out",
            plots.to_str().unwrap(),
            "--histogram-at",
            "123",
        ],
        &[],
    );
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains("123"), "{msg}");
    assert!(msg.contains("200"), "must list available instants: {msg}");
}
