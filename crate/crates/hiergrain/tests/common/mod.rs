//! Brute-force reference implementations of the population metrics, written
//! from the definitions with their own data layout. The production code is
//! checked against these on randomized micro-populations; any shared bug
//! would have to be independently re-invented here to slip through.

/// A micro-population: per agent, an optional label and nested
/// `[issue][choice]` strengths.
#[derive(Debug, Clone)]
pub struct MicroAgent {
    pub label: Option<u16>,
    pub strengths: Vec<Vec<f64>>,
}

/// Uniform split of one agent's preference mass on one issue: 1/k on each of
/// the k strength-maximal choices.
pub fn preference_weights(row: &[f64]) -> Vec<f64> {
    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..row.len()).filter(|&c| row[c] == best).collect();
    let share = 1.0 / winners.len() as f64;
    let mut w = vec![0.0; row.len()];
    for c in winners {
        w[c] = share;
    }
    w
}

/// Choice-frequency mass per `[label][issue][choice]` plus label member
/// counts; unlabeled agents contribute nothing.
pub fn frequency_mass(
    agents: &[MicroAgent],
    num_labels: usize,
    num_issues: usize,
    num_choices: usize,
) -> (Vec<Vec<Vec<f64>>>, Vec<usize>) {
    let mut mass = vec![vec![vec![0.0; num_choices]; num_issues]; num_labels];
    let mut members = vec![0usize; num_labels];
    for a in agents {
        let Some(l) = a.label else { continue };
        members[l as usize] += 1;
        for (i, row) in a.strengths.iter().enumerate() {
            for (c, w) in preference_weights(row).into_iter().enumerate() {
                mass[l as usize][i][c] += w;
            }
        }
    }
    (mass, members)
}

fn shannon_entropy_nats(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Mean over populated (label, issue) cells of the normalized entropy of the
/// within-label choice distribution; `None` when no label is populated.
pub fn sw_index(agents: &[MicroAgent], num_labels: usize, num_issues: usize, num_choices: usize) -> Option<f64> {
    let (mass, members) = frequency_mass(agents, num_labels, num_issues, num_choices);
    let mut sum = 0.0;
    let mut n = 0usize;
    for l in 0..num_labels {
        if members[l] == 0 {
            continue;
        }
        for i in 0..num_issues {
            let total: f64 = mass[l][i].iter().sum();
            let p: Vec<f64> = mass[l][i].iter().map(|&m| m / total).collect();
            sum += shannon_entropy_nats(&p) / (num_choices as f64).ln();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean cosine similarity between the choice-mass vectors of every unordered
/// pair of populated labels, per issue; `None` with fewer than two populated
/// labels.
pub fn cosine_index(agents: &[MicroAgent], num_labels: usize, num_issues: usize, num_choices: usize) -> Option<f64> {
    let (mass, members) = frequency_mass(agents, num_labels, num_issues, num_choices);
    let populated: Vec<usize> = (0..num_labels).filter(|&l| members[l] > 0).collect();
    if populated.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ai, &a) in populated.iter().enumerate() {
        for &b in &populated[ai + 1..] {
            for i in 0..num_issues {
                let (u, v) = (&mass[a][i], &mass[b][i]);
                let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                sum += dot / (nu * nv);
                n += 1;
            }
        }
    }
    Some(sum / n as f64)
}

/// Label/choice mutual information on one issue, in nats, from the tie-split
/// joint distribution over labeled agents; `None` when nobody is labeled.
pub fn mutual_information(
    agents: &[MicroAgent],
    num_labels: usize,
    num_issues: usize,
    num_choices: usize,
    issue: usize,
) -> Option<f64> {
    let (mass, members) = frequency_mass(agents, num_labels, num_issues, num_choices);
    let total: usize = members.iter().sum();
    if total == 0 {
        return None;
    }
    let joint: Vec<Vec<f64>> = (0..num_labels)
        .map(|l| (0..num_choices).map(|c| mass[l][issue][c] / total as f64).collect())
        .collect();
    let p_label: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let p_choice: Vec<f64> =
        (0..num_choices).map(|c| joint.iter().map(|row| row[c]).sum()).collect();
    let mut mi = 0.0;
    for l in 0..num_labels {
        for c in 0..num_choices {
            let p = joint[l][c];
            if p > 0.0 {
                mi += p * (p / (p_label[l] * p_choice[c])).ln();
            }
        }
    }
    Some(mi.max(0.0))
}

/// Minimal number of unit boosts to a non-preferred choice that flips the
/// preference: 1 for a tied maximum, else floor(gap) + 1.
pub fn activation_barrier(row: &[f64]) -> u64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sorted[0] == sorted[1] {
        1
    } else {
        (sorted[0] - sorted[1]).floor() as u64 + 1
    }
}
