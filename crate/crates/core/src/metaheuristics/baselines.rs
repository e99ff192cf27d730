use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::subset_report;
use crate::allocation::{Eligible, Method, SelectionReport};
use crate::model::TaskSpec;

fn top_by(
    task: &TaskSpec,
    eligible: &[Eligible],
    method: Method,
    cmp: impl Fn(&Eligible, &Eligible) -> Ordering,
) -> SelectionReport {
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| {
        cmp(&eligible[a], &eligible[b])
            .then_with(|| eligible[a].worker_id.cmp(&eligible[b].worker_id))
    });
    order.truncate(task.num_workers as usize);
    subset_report(task, eligible, method, &order)
}

/// Top `NW` by reputation alone.
pub fn reputation_select(task: &TaskSpec, eligible: &[Eligible]) -> SelectionReport {
    top_by(task, eligible, Method::ReputationOnly, |a, b| {
        b.scores.reputation.total_cmp(&a.scores.reputation)
    })
}

/// Top `NW` by compute capability, RAM breaking ties.
pub fn cpu_select(task: &TaskSpec, eligible: &[Eligible]) -> SelectionReport {
    let cc = |e: &Eligible| e.scores.compute_capability.unwrap_or(0.0);
    top_by(task, eligible, Method::CpuOnly, |a, b| {
        cc(b).total_cmp(&cc(a)).then(b.ram_gb.cmp(&a.ram_gb))
    })
}

/// Uniform sample of `NW` workers without replacement.
pub fn random_select(task: &TaskSpec, eligible: &[Eligible], seed: u64) -> SelectionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = (task.num_workers as usize).min(eligible.len());
    let members = index::sample(&mut rng, eligible.len(), k).into_vec();
    subset_report(task, eligible, Method::Random, &members)
}
