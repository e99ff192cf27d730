//! Instance generators and independent reference computations shared by
//! the integration tests. Nothing here calls the scoring code under test.

#![allow(dead_code)]

use crowdrl_core::allocation::AllocationConfig;
use crowdrl_core::model::{
    Address, ComputeProfile, DomainCode, PerfCounters, TaskSpec, TaskStatus, TaskType,
    WorkerProfile, WorkerStatus,
};
use crowdrl_core::scoring::AcceptedGpus;
use rand::Rng;

pub const GPU_CATALOG: [&str; 3] = ["gtx-1080", "rtx-3090", "a100"];

pub fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Reputation recomputed straight from counters.
pub fn reference_reputation(c: &PerfCounters) -> f64 {
    (ratio_or_one(c.accepted, c.assigned) * ratio_or_one(c.completed, c.accepted)).sqrt()
}

/// Normalized rating recomputed straight from counters.
pub fn reference_rating(c: &PerfCounters, prior: f64) -> f64 {
    if c.rating_count == 0 {
        prior
    } else {
        c.rating_sum as f64 / (100.0 * c.rating_count as f64)
    }
}

/// Arctangent by argument halving and a Taylor series, independent of the
/// platform `atan`.
pub fn series_atan(x: f64) -> f64 {
    if x < 0.0 {
        return -series_atan(-x);
    }
    // atan(x) = 2 atan(x / (1 + sqrt(1 + x^2))), applied until |x| is small
    let mut y = x;
    let mut scale = 1.0;
    while y > 0.05 {
        y /= 1.0 + (1.0 + y * y).sqrt();
        scale *= 2.0;
    }
    let y2 = y * y;
    let mut term = y;
    let mut sum = 0.0;
    for k in 0..40 {
        sum += term / (2 * k + 1) as f64;
        term *= -y2;
    }
    scale * sum
}

/// Reference compute capability using [`series_atan`] and a literal pi.
pub fn reference_cc(cores: u32, w1: f64) -> f64 {
    #[allow(clippy::approx_constant)]
    const PI: f64 = 3.141_592_653_589_793;
    2.0 / PI * series_atan(w1 * cores as f64)
}

/// Every predicate the selectors must respect, written out from the rules
/// rather than through the scoring module.
pub fn reference_eligible(
    w: &WorkerProfile,
    task: &TaskSpec,
    gpus: &AcceptedGpus,
    prior: f64,
) -> bool {
    let c = w.counters(task.domain, task.kind);
    let floors = reference_reputation(&c) >= task.min_reputation
        && reference_rating(&c, prior) >= task.min_rating
        && w.domains.contains(&task.domain);
    match task.kind {
        TaskType::ModelSharing => floors,
        TaskType::Training => {
            let req = task
                .compute_req
                .as_ref()
                .expect("training tasks carry compute_req");
            let gpu_ok = gpus.0.is_empty()
                || w.compute
                    .gpu_series
                    .as_ref()
                    .is_some_and(|g| gpus.0.contains(g));
            floors
                && w.status == WorkerStatus::Active
                && w.compute.cpu_cores >= req.cpu_cores
                && w.compute.ram_gb >= req.ram_gb
                && gpu_ok
        }
    }
}

pub fn random_counters(rng: &mut impl Rng) -> PerfCounters {
    let assigned = rng.random_range(0..20);
    let accepted = rng.random_range(0..=assigned);
    let completed = rng.random_range(0..=accepted);
    let rating_count = rng.random_range(0..=completed);
    let rating_sum = (0..rating_count)
        .map(|_| rng.random_range(0..=100u64))
        .sum();
    PerfCounters {
        assigned,
        accepted,
        completed,
        rating_sum,
        rating_count,
    }
}

pub fn random_worker(rng: &mut impl Rng, i: u64) -> WorkerProfile {
    let domains: Vec<DomainCode> = match rng.random_range(0..6) {
        0 => vec![DomainCode(1)],
        1 => vec![DomainCode(0), DomainCode(1)],
        _ => vec![DomainCode(0)],
    };
    let gpu_series = if rng.random_bool(0.5) {
        Some(GPU_CATALOG[rng.random_range(0..GPU_CATALOG.len())].to_string())
    } else {
        None
    };
    let mut w = WorkerProfile::new(
        Address::derive("w", i),
        domains,
        ComputeProfile {
            cpu_cores: rng.random_range(1..=16),
            ram_gb: rng.random_range(1..=64),
            gpu_series,
        },
    );
    let cells: Vec<_> = w.stats.keys().copied().collect();
    for cell in cells {
        w.stats.insert(cell, random_counters(rng));
    }
    w.status = if rng.random_bool(0.85) {
        WorkerStatus::Active
    } else {
        WorkerStatus::Idle
    };
    w
}

pub fn random_training_task(rng: &mut impl Rng, nw: u32) -> TaskSpec {
    TaskSpec {
        task_id: Address::derive("task", rng.random()),
        requester_id: Address::derive("req", 0),
        kind: TaskType::Training,
        domain: DomainCode(0),
        description: String::new(),
        num_workers: nw,
        min_reputation: rng.random_range(0.0..0.8),
        min_rating: rng.random_range(0.0..0.8),
        time_constraint: 100,
        compute_req: Some(ComputeProfile {
            cpu_cores: rng.random_range(1..=8),
            ram_gb: rng.random_range(1..=32),
            gpu_series: None,
        }),
        env_features: None,
        similarity_weights: None,
        status: TaskStatus::Pending,
    }
}

pub fn random_config(rng: &mut impl Rng) -> AllocationConfig {
    let mut config = AllocationConfig::default();
    if rng.random_bool(0.5) {
        let k = rng.random_range(1..=GPU_CATALOG.len());
        config.accepted_gpus = AcceptedGpus::new(GPU_CATALOG[..k].iter().copied());
    }
    config
}

/// Calls `f` on every size-`k` subset of `0..n` (as sorted index lists).
pub fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), &mut f);
}

/// Sum of `values` added largest-first, so equal multisets give equal bits.
pub fn canonical_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter().sum()
}
