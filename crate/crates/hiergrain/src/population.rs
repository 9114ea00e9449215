//! Agent state and population initialization.
//!
//! Each agent holds one nonnegative strength per (issue, choice) cell, stored
//! as a flat issue-major row. Strengths only ever grow; the preferred choice
//! on an issue is the strength argmax with ties broken uniformly at random at
//! expression time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::SimulationConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub label: Option<u16>,
    strengths: Box<[f64]>,
}

impl AgentState {
    pub fn new(id: u32, label: Option<u16>, strengths: Vec<f64>) -> Self {
        Self {
            id,
            label,
            strengths: strengths.into_boxed_slice(),
        }
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    /// Strength row for one issue: a `num_choices` long slice.
    pub fn issue_row(&self, issue: u16, num_choices: u16) -> &[f64] {
        let start = issue as usize * num_choices as usize;
        &self.strengths[start..start + num_choices as usize]
    }

    pub fn add_strength(&mut self, issue: u16, choice: u16, num_choices: u16, amount: f64) {
        self.strengths[issue as usize * num_choices as usize + choice as usize] += amount;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub timestep: u64,
    pub num_issues: u16,
    pub num_choices: u16,
    pub agents: Vec<AgentState>,
}

impl Population {
    /// Draws the initial population: every agent gets a uniform random label
    /// and strengths uniform in [0, init-strength-max). A zero bound produces
    /// an all-tied flat table without consuming random draws.
    pub fn init(config: &SimulationConfig, rng: &mut ChaCha8Rng) -> Self {
        let n_cells = config.num_strengths();
        let mut agents = Vec::with_capacity(config.pop_size as usize);
        for id in 0..config.pop_size {
            let mut strengths = vec![0.0f64; n_cells];
            if config.init_strength_max > 0.0 {
                for s in strengths.iter_mut() {
                    *s = rng.gen_range(0.0..config.init_strength_max);
                }
            }
            let label = rng.gen_range(0..config.num_labels);
            agents.push(AgentState::new(id, Some(label), strengths));
        }
        Population {
            timestep: 0,
            num_issues: config.num_issues,
            num_choices: config.num_choices,
            agents,
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Member count per label; index = label id.
    pub fn label_counts(&self, num_labels: u16) -> Vec<u32> {
        let mut counts = vec![0u32; num_labels as usize];
        for a in &self.agents {
            if let Some(l) = a.label {
                counts[l as usize] += 1;
            }
        }
        counts
    }
}

/// First argmax index and the number of cells tied at the maximum.
pub fn max_info(row: &[f64]) -> (usize, u32) {
    debug_assert!(!row.is_empty());
    let mut best = row[0];
    let mut idx = 0usize;
    let mut ties = 1u32;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            idx = i;
            ties = 1;
        } else if v == best {
            ties += 1;
        }
    }
    (idx, ties)
}

/// The agent's expressed choice on an issue: strength argmax, ties resolved
/// uniformly at random.
pub fn express_preferred(row: &[f64], rng: &mut ChaCha8Rng) -> u16 {
    let (idx, ties) = max_info(row);
    if ties == 1 {
        return idx as u16;
    }
    let pick = rng.gen_range(0..ties);
    let best = row[idx];
    let mut seen = 0u32;
    for (i, &v) in row.iter().enumerate() {
        if v == best {
            if seen == pick {
                return i as u16;
            }
            seen += 1;
        }
    }
    unreachable!("tie index within counted ties")
}
