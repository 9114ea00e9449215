//! One timestep of the dynamics.
//!
//! A step runs two phases in fixed order. First the label phase: every agent,
//! in id order, either may drop its label (if labeled) or may adopt a uniform
//! random one (if unlabeled); exactly one of the two branches applies per
//! agent per step. Then the interaction phase: every agent, again in id
//! order, acts as receiver exactly once, picks a uniform random partner as
//! sender, and updates immediately, so later receivers see earlier updates.
//! A run is strictly sequential by construction; parallelism belongs at the
//! replicate level.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::SimulationConfig;
use crate::population::{express_preferred, AgentState, Population};

/// Counters for one completed timestep. `timestep` is the post-step time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    pub timestep: u64,
    pub n_label_drops: u32,
    pub n_label_adoptions: u32,
    /// Updates after which the boosted choice became the strict strength
    /// argmax on its issue without having been it before; per-issue events
    /// summed over the step.
    pub n_preferred_choice_changes: u32,
    /// Interactions that modified the receiver (not ignored, partner found).
    pub n_interactions_effective: u32,
    /// Single-issue unit updates (cross-label or unlabeled exchanges).
    pub n_simple_updates: u32,
    /// Same-label per-issue updates, each worth strength-of-influence.
    pub n_same_label_updates: u32,
}

impl StepReport {
    /// Total strength mass this step added to the population. Exact when
    /// strength-of-influence is an integer.
    pub fn added_mass(&self, config: &SimulationConfig) -> f64 {
        self.n_simple_updates as f64
            + self.n_same_label_updates as f64 * config.strength_of_influence
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InteractionOutcome {
    /// Differently labeled pair while ignoring is enabled: no effect.
    Ignored,
    /// Single uniform issue, unit boost to the sender's expressed choice.
    Simple { issue: u16, choice: u16, flipped: bool },
    /// Same-label exchange over `n_issues` distinct issues.
    SameLabel { n_issues: u16, n_flips: u16 },
}

/// Reusable buffers so the hot loop does not allocate.
#[derive(Debug, Default)]
pub struct StepScratch {
    issues: Vec<u16>,
}

/// Label migration for every agent, in id order. Returns (drops, adoptions).
pub fn label_phase(
    pop: &mut Population,
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
) -> (u32, u32) {
    let mut drops = 0u32;
    let mut adoptions = 0u32;
    for agent in pop.agents.iter_mut() {
        match agent.label {
            Some(_) => {
                if rng.gen_bool(config.prob_dropping_label) {
                    agent.label = None;
                    drops += 1;
                }
            }
            None => {
                if rng.gen_bool(config.prob_adopting_label) {
                    agent.label = Some(rng.gen_range(0..config.num_labels));
                    adoptions += 1;
                }
            }
        }
    }
    (drops, adoptions)
}

/// Uniform partner draw for `receiver` among the other `n - 1` agents;
/// `None` when alone.
pub fn select_partner(receiver: usize, n: usize, rng: &mut ChaCha8Rng) -> Option<usize> {
    if n < 2 {
        return None;
    }
    let k = rng.gen_range(0..n - 1);
    Some(if k >= receiver { k + 1 } else { k })
}

/// Max over the choices of `row` other than `skip`.
fn rest_max(row: &[f64], skip: u16) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if i != skip as usize && v > m {
            m = v;
        }
    }
    m
}

/// Adds `amount` to the receiver's strength for the sender's expressed choice
/// on `issue`. Returns the choice and whether the receiver's strict argmax
/// newly moved onto it.
fn boost(
    receiver: &mut AgentState,
    sender: &AgentState,
    issue: u16,
    num_choices: u16,
    amount: f64,
    rng: &mut ChaCha8Rng,
) -> (u16, bool) {
    let choice = express_preferred(sender.issue_row(issue, num_choices), rng);
    let row = receiver.issue_row(issue, num_choices);
    let own = row[choice as usize];
    let rivals = rest_max(row, choice);
    let flipped = own <= rivals && own + amount > rivals;
    receiver.add_strength(issue, choice, num_choices, amount);
    (choice, flipped)
}

/// One receiver-initiated exchange. The sender is read-only; the receiver is
/// updated in place.
pub fn interaction(
    receiver: &mut AgentState,
    sender: &AgentState,
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
    scratch: &mut StepScratch,
) -> InteractionOutcome {
    let nc = config.num_choices;
    match (receiver.label, sender.label) {
        (Some(a), Some(b)) if a == b => {
            let k = config.effective_discourse();
            let mut n_flips = 0u16;
            if k == config.num_issues {
                for issue in 0..k {
                    let (_, flipped) =
                        boost(receiver, sender, issue, nc, config.strength_of_influence, rng);
                    n_flips += flipped as u16;
                }
            } else {
                // partial Fisher-Yates draw of k distinct issues
                scratch.issues.clear();
                scratch.issues.extend(0..config.num_issues);
                for j in 0..k as usize {
                    let r = rng.gen_range(j..config.num_issues as usize);
                    scratch.issues.swap(j, r);
                }
                for j in 0..k as usize {
                    let issue = scratch.issues[j];
                    let (_, flipped) =
                        boost(receiver, sender, issue, nc, config.strength_of_influence, rng);
                    n_flips += flipped as u16;
                }
            }
            InteractionOutcome::SameLabel { n_issues: k, n_flips }
        }
        (Some(_), Some(_)) if config.ignoring => InteractionOutcome::Ignored,
        _ => {
            let issue = rng.gen_range(0..config.num_issues);
            let (choice, flipped) = boost(receiver, sender, issue, nc, 1.0, rng);
            InteractionOutcome::Simple { issue, choice, flipped }
        }
    }
}

fn pair_mut(agents: &mut [AgentState], r: usize, s: usize) -> (&mut AgentState, &AgentState) {
    debug_assert_ne!(r, s);
    if s < r {
        let (left, right) = agents.split_at_mut(r);
        (&mut right[0], &left[s])
    } else {
        let (left, right) = agents.split_at_mut(s);
        (&mut left[r], &right[0])
    }
}

/// Advances the population by one timestep.
pub fn step(
    pop: &mut Population,
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
    scratch: &mut StepScratch,
) -> StepReport {
    let mut report = StepReport::default();
    let (drops, adoptions) = label_phase(pop, config, rng);
    report.n_label_drops = drops;
    report.n_label_adoptions = adoptions;

    let n = pop.agents.len();
    for r in 0..n {
        let Some(s) = select_partner(r, n, rng) else {
            continue;
        };
        let (receiver, sender) = pair_mut(&mut pop.agents, r, s);
        match interaction(receiver, sender, config, rng, scratch) {
            InteractionOutcome::Ignored => {}
            InteractionOutcome::Simple { flipped, .. } => {
                report.n_interactions_effective += 1;
                report.n_simple_updates += 1;
                report.n_preferred_choice_changes += flipped as u32;
            }
            InteractionOutcome::SameLabel { n_issues, n_flips } => {
                report.n_interactions_effective += 1;
                report.n_same_label_updates += n_issues as u32;
                report.n_preferred_choice_changes += n_flips as u32;
            }
        }
    }
    pop.timestep += 1;
    report.timestep = pop.timestep;
    report
}
