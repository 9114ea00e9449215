//! Property checks of the structural guarantees the rest of the system leans
//! on: metric bounds and symmetries, tie-split accounting, monotone strength
//! growth, record/snapshot shape, and config round-tripping.

use hiergrain::metrics::{
    activation_barrier, agent_relative_entropy, choice_frequencies, cosine_index,
    mutual_information_from_table, per_label_sw, sw_index,
};
use hiergrain::{
    derive_replicate_seed, run_rng, run_simulation, step, AgentState, Population, Regime,
    RunManifest, RunOptions, SimulationConfig, StepScratch, Thresholds,
};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

/// Hand-assembled population with a mix of tie-rich integer strengths,
/// generic floats, and unlabeled agents.
fn arb_population() -> impl Strategy<Value = (SimulationConfig, Population)> {
    (1u32..12, 1u16..4, 1u16..4, 2u16..5).prop_flat_map(|(pop_size, nl, ni, nc)| {
        let strength = prop_oneof![
            (0u32..5).prop_map(|v| v as f64),
            0.0..4.0f64,
        ];
        let agent = (
            prop::option::of(0..nl),
            prop::collection::vec(strength, (ni * nc) as usize),
        );
        prop::collection::vec(agent, pop_size as usize).prop_map(move |raw| {
            let config = SimulationConfig {
                pop_size,
                num_labels: nl,
                num_issues: ni,
                num_choices: nc,
                ..SimulationConfig::default()
            };
            let agents = raw
                .into_iter()
                .enumerate()
                .map(|(id, (label, strengths))| AgentState::new(id as u32, label, strengths))
                .collect();
            (config, Population { timestep: 0, num_issues: ni, num_choices: nc, agents })
        })
    })
}

/// Small but otherwise unconstrained run setup; short horizon keeps the
/// property affordable.
fn arb_run_config() -> impl Strategy<Value = SimulationConfig> {
    (
        (2u32..24, 1u16..4, 1u16..3, 2u16..4, 1u32..5),
        (0.5f64..3.0, any::<bool>(), 0.0f64..0.05, 0.0f64..0.3, 0.0f64..2.0, any::<u64>()),
    )
        .prop_map(
            |((pop_size, nl, ni, nc, mid), (soi, ignoring, pdl, pal, init, seed))| {
                SimulationConfig {
                    pop_size,
                    num_labels: nl,
                    num_issues: ni,
                    num_choices: nc,
                    multi_issue_discourse: mid,
                    strength_of_influence: soi,
                    ignoring,
                    prob_dropping_label: pdl,
                    prob_adopting_label: pal,
                    init_strength_max: init,
                    max_timesteps: 60,
                    snapshot_interval: 20,
                    equilibrium_window: 30,
                    seed,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Indices stay inside their ranges, undefined cases surface as `None`,
    /// and per-agent quantities respect their floors.
    #[test]
    fn metric_bounds_hold((config, pop) in arb_population()) {
        let table = choice_frequencies(&pop, &config);
        let n_labeled = pop.agents.iter().filter(|a| a.label.is_some()).count();
        let n_populated = (0..config.num_labels).filter(|&l| !table.is_empty_label(l)).count();

        prop_assert_eq!(table.total_labeled(), n_labeled as u64);

        match sw_index(&table) {
            Some(v) => prop_assert!((0.0..=1.0 + TOL).contains(&v)),
            None => prop_assert_eq!(n_populated, 0),
        }
        match cosine_index(&table) {
            Some(v) => prop_assert!((0.0..=1.0 + TOL).contains(&v)),
            None => prop_assert!(n_populated < 2),
        }
        for (label, v) in per_label_sw(&table).iter().enumerate() {
            match v {
                Some(v) => prop_assert!((0.0..=1.0 + TOL).contains(v)),
                None => prop_assert!(table.is_empty_label(label as u16)),
            }
        }
        let mi_cap = (config.num_labels.min(config.num_choices) as f64).ln() + TOL;
        for issue in 0..config.num_issues {
            match mutual_information_from_table(&table, issue) {
                Some(v) => prop_assert!((0.0..=mi_cap).contains(&v)),
                None => prop_assert_eq!(n_labeled, 0),
            }
        }
        for agent in &pop.agents {
            for issue in 0..config.num_issues {
                let row = agent.issue_row(issue, config.num_choices);
                prop_assert!(activation_barrier(row) >= 1);
                let h = agent_relative_entropy(row);
                prop_assert!((0.0..=1.0 + TOL).contains(&h));
            }
        }
    }

    /// Population metrics do not depend on agent enumeration order.
    #[test]
    fn metrics_ignore_agent_order((config, pop) in arb_population()) {
        let mut reversed = pop.clone();
        reversed.agents.reverse();
        let a = choice_frequencies(&pop, &config);
        let b = choice_frequencies(&reversed, &config);

        let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (None, None) => true,
            (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
            _ => false,
        };
        prop_assert!(close(sw_index(&a), sw_index(&b)));
        prop_assert!(close(cosine_index(&a), cosine_index(&b)));
        for issue in 0..config.num_issues {
            prop_assert!(close(
                mutual_information_from_table(&a, issue),
                mutual_information_from_table(&b, issue),
            ));
        }
    }

    /// Frequency rows of populated labels are probability distributions;
    /// empty labels contribute exactly nothing.
    #[test]
    fn tie_split_rows_are_distributions((config, pop) in arb_population()) {
        let table = choice_frequencies(&pop, &config);
        for label in 0..config.num_labels {
            for issue in 0..config.num_issues {
                let row = table.row(label, issue);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                let sum: f64 = row.iter().sum();
                if table.is_empty_label(label) {
                    prop_assert_eq!(sum, 0.0);
                } else {
                    prop_assert!((sum - 1.0).abs() <= TOL);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Strength tables only ever gain mass, one boosted cell per effective
    /// update.
    #[test]
    fn strengths_never_decrease(config in arb_run_config()) {
        let mut rng = run_rng(config.seed);
        let mut pop = Population::init(&config, &mut rng);
        let mut scratch = StepScratch::default();
        for _ in 0..8 {
            let before: Vec<Vec<f64>> =
                pop.agents.iter().map(|a| a.strengths().to_vec()).collect();
            step(&mut pop, &config, &mut rng, &mut scratch);
            for (agent, old) in pop.agents.iter().zip(&before) {
                for (new_v, old_v) in agent.strengths().iter().zip(old) {
                    prop_assert!(new_v >= old_v);
                }
            }
        }
    }

    /// One full run keeps its records, snapshots, and regime report mutually
    /// consistent.
    #[test]
    fn run_outputs_are_internally_consistent(config in arb_run_config()) {
        let manifest = RunManifest::new(config.clone(), 0, 0, 0, config.seed);
        let out = run_simulation(manifest, &RunOptions::default());

        let n_records = (config.max_timesteps / config.snapshot_interval) as usize + 1;
        prop_assert_eq!(out.records.len(), n_records);
        prop_assert_eq!(out.snapshots.len(), n_records);

        let mut last_change: Option<u64> = None;
        for (i, record) in out.records.iter().enumerate() {
            prop_assert_eq!(record.timestep, i as u64 * config.snapshot_interval);
            prop_assert_eq!(record.per_label_sw.len(), config.num_labels as usize);
            prop_assert_eq!(record.mutual_information.len(), config.num_issues as usize);
            prop_assert!(record.ab_q1 >= 1.0);
            prop_assert!(record.ab_q1 <= record.ab_median);
            prop_assert!(record.ab_median <= record.ab_q3);
            prop_assert!((0.0..=1.0 + TOL).contains(&record.agent_entropy_mean));
            if let Some(t) = record.t_last_choice_change {
                prop_assert!(t <= record.timestep);
            }
            prop_assert!(record.t_last_choice_change >= last_change);
            last_change = record.t_last_choice_change;
        }

        for snapshot in &out.snapshots {
            let mut members_total = 0u32;
            for label in &snapshot.labels {
                members_total += label.n_members;
                prop_assert_eq!(label.hist.len(), config.num_issues as usize);
                for issue_hist in &label.hist {
                    let sum: f64 = issue_hist.iter().sum();
                    prop_assert!((sum - label.n_members as f64).abs() <= TOL);
                }
            }
            prop_assert!(members_total <= config.pop_size);
            for issue_hist in &snapshot.global {
                let sum: f64 = issue_hist.iter().sum();
                prop_assert!((sum - config.pop_size as f64).abs() <= TOL);
            }
        }

        let regime = &out.regime;
        prop_assert_eq!(regime.thresholds_used, Thresholds::default());
        if let Some(bounds) = regime.phase_boundaries {
            prop_assert_eq!(regime.regime, Regime::Iterative);
            prop_assert!(bounds.end_phase_i <= bounds.end_phase_ii);
            prop_assert!(bounds.end_phase_ii <= bounds.end_phase_iii);
            prop_assert_eq!(Some(bounds.end_phase_iii), regime.t_equilibrium);
        }
        if regime.regime == Regime::Iterative {
            prop_assert!(regime.t_local_align.is_some());
            prop_assert!(regime.t_global_align.is_some());
        }
        for t in [regime.t_local_align, regime.t_global_align, regime.t_equilibrium]
            .into_iter()
            .flatten()
        {
            prop_assert_eq!(t % config.snapshot_interval, 0);
            prop_assert!(t <= config.max_timesteps);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Serializing a config to TOML and back changes nothing, including the
    /// float-valued fields. TOML integers are signed 64-bit, so seeds written
    /// to config files live in the i64 range.
    #[test]
    fn config_round_trips_through_toml(
        (config, seed) in (arb_run_config(), 0..=i64::MAX),
    ) {
        let config = SimulationConfig { seed: seed as u64, ..config };
        let text = toml::to_string(&config).expect("serializable config");
        let back: SimulationConfig = toml::from_str(&text).expect("parseable config");
        prop_assert_eq!(back, config);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Replicate seeds are stable and collision-free across a small grid.
    #[test]
    fn replicate_seeds_distinct(master in any::<u64>()) {
        let mut seen = std::collections::HashSet::new();
        for cell in 0..6u64 {
            for rep in 0..6u32 {
                let seed = derive_replicate_seed(master, cell, rep);
                prop_assert_eq!(seed, derive_replicate_seed(master, cell, rep));
                prop_assert!(seen.insert(seed), "seed collision at cell {} rep {}", cell, rep);
            }
        }
    }
}
