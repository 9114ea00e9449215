//! Snapshot metrics over the population.
//!
//! All distribution-level metrics share one convention: an agent whose
//! strength row has tied maxima contributes its unit mass split equally over
//! the tied choices, so no random draws happen during measurement and a
//! snapshot is a pure function of state. Unlabeled agents are excluded from
//! label-conditioned metrics. Quantities that have no defined value (for
//! example cosine alignment with fewer than two populated labels) are `None`,
//! never a fabricated zero.

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::engine::StepReport;
use crate::population::{max_info, Population};

/// Per-(label, issue) distribution of preferred choices among labeled agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceFrequencyTable {
    pub num_labels: u16,
    pub num_issues: u16,
    pub num_choices: u16,
    freq: Vec<f64>,
    pub labeled_count: Vec<u32>,
}

impl ChoiceFrequencyTable {
    fn idx(&self, label: u16, issue: u16) -> usize {
        (label as usize * self.num_issues as usize + issue as usize) * self.num_choices as usize
    }

    /// Frequency row for one (label, issue); sums to 1 for populated labels,
    /// all zero for empty ones.
    pub fn row(&self, label: u16, issue: u16) -> &[f64] {
        let start = self.idx(label, issue);
        &self.freq[start..start + self.num_choices as usize]
    }

    pub fn is_empty_label(&self, label: u16) -> bool {
        self.labeled_count[label as usize] == 0
    }

    pub fn total_labeled(&self) -> u64 {
        self.labeled_count.iter().map(|&c| c as u64).sum()
    }
}

/// Tie-splitting argmax mass of one strength row, accumulated into `out`
/// scaled by `weight`.
pub(crate) fn add_preference_mass(row: &[f64], weight: f64, out: &mut [f64]) {
    let (idx, ties) = max_info(row);
    if ties == 1 {
        out[idx] += weight;
    } else {
        let share = weight / ties as f64;
        let best = row[idx];
        for (c, &v) in row.iter().enumerate() {
            if v == best {
                out[c] += share;
            }
        }
    }
}

/// Builds the preferred-choice distribution per (label, issue).
pub fn choice_frequencies(pop: &Population, config: &SimulationConfig) -> ChoiceFrequencyTable {
    let (nl, ni, nc) = (config.num_labels, pop.num_issues, pop.num_choices);
    let mut freq = vec![0.0f64; nl as usize * ni as usize * nc as usize];
    let mut labeled_count = vec![0u32; nl as usize];
    for agent in &pop.agents {
        let Some(label) = agent.label else { continue };
        labeled_count[label as usize] += 1;
        for issue in 0..ni {
            let base = (label as usize * ni as usize + issue as usize) * nc as usize;
            add_preference_mass(
                agent.issue_row(issue, nc),
                1.0,
                &mut freq[base..base + nc as usize],
            );
        }
    }
    for label in 0..nl as usize {
        let n = labeled_count[label];
        if n > 0 {
            let inv = 1.0 / n as f64;
            let start = label * ni as usize * nc as usize;
            for v in &mut freq[start..start + ni as usize * nc as usize] {
                *v *= inv;
            }
        }
    }
    ChoiceFrequencyTable {
        num_labels: nl,
        num_issues: ni,
        num_choices: nc,
        freq,
        labeled_count,
    }
}

/// Shannon entropy of a probability row normalized by ln(num choices), in
/// [0, 1].
pub fn normalized_entropy(p: &[f64]) -> f64 {
    debug_assert!(p.len() >= 2);
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    h / (p.len() as f64).ln()
}

/// Within-label diversity: normalized entropy averaged over populated labels
/// and all issues. `None` when no label is populated.
pub fn sw_index(table: &ChoiceFrequencyTable) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u32;
    for label in 0..table.num_labels {
        if table.is_empty_label(label) {
            continue;
        }
        for issue in 0..table.num_issues {
            sum += normalized_entropy(table.row(label, issue));
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Per-label mean over issues of normalized entropy; `None` for empty labels.
pub fn per_label_sw(table: &ChoiceFrequencyTable) -> Vec<Option<f64>> {
    (0..table.num_labels)
        .map(|label| {
            if table.is_empty_label(label) {
                return None;
            }
            let sum: f64 = (0..table.num_issues)
                .map(|issue| normalized_entropy(table.row(label, issue)))
                .sum();
            Some(sum / table.num_issues as f64)
        })
        .collect()
}

/// Plain Euclidean cosine similarity.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&a, &b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// Cross-label alignment: cosine similarity averaged over unordered pairs of
/// populated labels, then over issues. `None` with fewer than two populated
/// labels.
pub fn cosine_index(table: &ChoiceFrequencyTable) -> Option<f64> {
    let labels: Vec<u16> =
        (0..table.num_labels).filter(|&l| !table.is_empty_label(l)).collect();
    if labels.len() < 2 {
        return None;
    }
    let mut issue_sum = 0.0;
    for issue in 0..table.num_issues {
        let mut pair_sum = 0.0;
        let mut pairs = 0u32;
        for (i, &a) in labels.iter().enumerate() {
            for &b in &labels[i + 1..] {
                pair_sum += cosine(table.row(a, issue), table.row(b, issue));
                pairs += 1;
            }
        }
        issue_sum += pair_sum / pairs as f64;
    }
    Some(issue_sum / table.num_issues as f64)
}

/// Unit inputs a challenger choice needs before it strictly overtakes the
/// current maximum of this strength row. Rows tied at the maximum sit one
/// input away from a takeover.
pub fn activation_barrier(row: &[f64]) -> u64 {
    let (idx, ties) = max_info(row);
    if ties > 1 {
        return 1;
    }
    let best = row[idx];
    let mut runner_up = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if i != idx && v > runner_up {
            runner_up = v;
        }
    }
    (best - runner_up).floor() as u64 + 1
}

/// Normalized entropy of the linearly normalized strength row; an all-zero
/// row is maximally undecided and scores 1.
pub fn agent_relative_entropy(row: &[f64]) -> f64 {
    let total: f64 = row.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    let mut h = 0.0;
    for &s in row {
        if s > 0.0 {
            let p = s / total;
            h -= p * p.ln();
        }
    }
    h / (row.len() as f64).ln()
}

/// Mutual information (nats) between label membership and preferred choice on
/// one issue, over labeled agents with tie mass split. `None` when nobody is
/// labeled.
pub fn mutual_information_from_table(table: &ChoiceFrequencyTable, issue: u16) -> Option<f64> {
    let total = table.total_labeled();
    if total == 0 {
        return None;
    }
    let nc = table.num_choices as usize;
    let mut p_choice = vec![0.0f64; nc];
    for label in 0..table.num_labels {
        let w = table.labeled_count[label as usize] as f64 / total as f64;
        if w == 0.0 {
            continue;
        }
        for (c, &p) in table.row(label, issue).iter().enumerate() {
            p_choice[c] += w * p;
        }
    }
    let mut mi = 0.0;
    for label in 0..table.num_labels {
        let w = table.labeled_count[label as usize] as f64 / total as f64;
        if w == 0.0 {
            continue;
        }
        for (c, &p) in table.row(label, issue).iter().enumerate() {
            let joint = w * p;
            if joint > 0.0 {
                mi += joint * (joint / (w * p_choice[c])).ln();
            }
        }
    }
    // exact zeros can round to tiny negatives
    Some(mi.max(0.0))
}

/// Convenience wrapper building the frequency table for one call.
pub fn mutual_information(
    pop: &Population,
    config: &SimulationConfig,
    issue: u16,
) -> Option<f64> {
    mutual_information_from_table(&choice_frequencies(pop, config), issue)
}

/// Linear-interpolation quartiles of a sorted slice.
fn quartiles_sorted(v: &[u64]) -> (f64, f64, f64) {
    debug_assert!(!v.is_empty());
    let q = |frac: f64| -> f64 {
        let pos = frac * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let t = pos - lo as f64;
        if lo + 1 < v.len() {
            v[lo] as f64 * (1.0 - t) + v[lo + 1] as f64 * t
        } else {
            v[lo] as f64
        }
    };
    (q(0.25), q(0.5), q(0.75))
}

/// Windowed counters carried between snapshots. The choice-change clock is
/// cumulative and survives `take_window`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunCounters {
    window_choice_changes: u64,
    window_label_switches: u64,
    t_last_choice_change: Option<u64>,
}

impl RunCounters {
    pub fn absorb(&mut self, report: &StepReport) {
        self.window_choice_changes += report.n_preferred_choice_changes as u64;
        self.window_label_switches +=
            (report.n_label_drops + report.n_label_adoptions) as u64;
        if report.n_preferred_choice_changes > 0 {
            self.t_last_choice_change = Some(report.timestep);
        }
    }

    pub fn t_last_choice_change(&self) -> Option<u64> {
        self.t_last_choice_change
    }

    fn take_window(&mut self) -> (u64, u64) {
        let w = (self.window_choice_changes, self.window_label_switches);
        self.window_choice_changes = 0;
        self.window_label_switches = 0;
        w
    }
}

/// One row of metrics.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub timestep: u64,
    pub sw_index: Option<f64>,
    pub cosine_index: Option<f64>,
    pub per_label_sw: Vec<Option<f64>>,
    /// Label/choice mutual information per issue, in nats.
    pub mutual_information: Vec<Option<f64>>,
    pub mutual_information_mean: Option<f64>,
    pub ab_q1: f64,
    pub ab_median: f64,
    pub ab_q3: f64,
    pub agent_entropy_mean: f64,
    pub n_choice_changes_window: u64,
    pub n_label_switches_window: u64,
    /// Most recent timestep with any preferred-choice change, cumulative
    /// since the start of the run; lets equilibrium be recovered exactly from
    /// the records alone.
    pub t_last_choice_change: Option<u64>,
}

/// Takes a full snapshot of the population and resets the window counters.
pub fn collect(
    pop: &Population,
    config: &SimulationConfig,
    counters: &mut RunCounters,
) -> MetricsRecord {
    let table = choice_frequencies(pop, config);
    let sw = sw_index(&table);
    let cos = cosine_index(&table);
    let label_sw = per_label_sw(&table);
    let mi: Vec<Option<f64>> = (0..pop.num_issues)
        .map(|i| mutual_information_from_table(&table, i))
        .collect();
    let mi_mean = if mi.iter().all(|m| m.is_some()) && !mi.is_empty() {
        Some(mi.iter().map(|m| m.unwrap()).sum::<f64>() / mi.len() as f64)
    } else {
        None
    };

    let mut barriers = Vec::with_capacity(pop.len() * pop.num_issues as usize);
    let mut entropy_sum = 0.0;
    for agent in &pop.agents {
        for issue in 0..pop.num_issues {
            let row = agent.issue_row(issue, pop.num_choices);
            barriers.push(activation_barrier(row));
            entropy_sum += agent_relative_entropy(row);
        }
    }
    barriers.sort_unstable();
    let (ab_q1, ab_median, ab_q3) = quartiles_sorted(&barriers);
    let agent_entropy_mean = entropy_sum / barriers.len() as f64;

    let (changes, switches) = counters.take_window();
    MetricsRecord {
        timestep: pop.timestep,
        sw_index: sw,
        cosine_index: cos,
        per_label_sw: label_sw,
        mutual_information: mi,
        mutual_information_mean: mi_mean,
        ab_q1,
        ab_median,
        ab_q3,
        agent_entropy_mean,
        n_choice_changes_window: changes,
        n_label_switches_window: switches,
        t_last_choice_change: counters.t_last_choice_change(),
    }
}
