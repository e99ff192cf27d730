use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::Population;
use super::SimError;
use crate::allocation::{
    canonical_mean, filter_candidates, greedy_select, AllocationConfig, Eligible, Method,
    SelectionReport,
};
use crate::metaheuristics::{
    aco_select, cpu_select, ga_select, pso_select, random_select, reputation_select,
    OptimizerConfig,
};
use crate::model::{Address, ComputeProfile, DomainCode, TaskSpec, TaskStatus, TaskType};

/// Constraints of the recruitment task every benchmark instance uses; only
/// the group size varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchTask {
    pub domain: DomainCode,
    pub min_reputation: f64,
    pub min_rating: f64,
    pub cpu_cores: u32,
    pub ram_gb: u32,
}

impl Default for BenchTask {
    fn default() -> Self {
        BenchTask {
            domain: DomainCode(0),
            min_reputation: 0.2,
            min_rating: 0.2,
            cpu_cores: 2,
            ram_gb: 8,
        }
    }
}

impl BenchTask {
    pub fn spec(&self, group_size: u32) -> TaskSpec {
        TaskSpec {
            task_id: Address::derive("bench-task", u64::from(group_size)),
            requester_id: Address::derive("bench-requester", 0),
            kind: TaskType::Training,
            domain: self.domain,
            description: format!("benchmark instance, group size {group_size}"),
            num_workers: group_size,
            min_reputation: self.min_reputation,
            min_rating: self.min_rating,
            time_constraint: 100,
            compute_req: Some(ComputeProfile {
                cpu_cores: self.cpu_cores,
                ram_gb: self.ram_gb,
                gpu_series: None,
            }),
            env_features: None,
            similarity_weights: None,
            status: TaskStatus::Pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub group_sizes: Vec<u32>,
    pub repetitions: u32,
    /// Repetition `r` runs with seed `seed + r`.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub task: BenchTask,
    pub allocation: AllocationConfig,
    /// When false, `wall_ms` is reported as 0 so outputs are byte-stable.
    pub record_timing: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            group_sizes: vec![5, 10, 15, 20, 25, 30],
            repetitions: 30,
            seed: 1,
            optimizer: OptimizerConfig::default(),
            task: BenchTask::default(),
            allocation: AllocationConfig::default(),
            record_timing: true,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(SimError::InvalidSpec(
                "group_sizes must be non-empty and positive".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(SimError::InvalidSpec("repetitions must be positive".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

/// One (group size, method, repetition) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub group_size: u32,
    pub method: String,
    pub mean_qos: f64,
    pub wall_ms: f64,
    pub seed: u64,
}

/// Rows averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub group_size: u32,
    pub method: String,
    pub repetitions: usize,
    pub mean_qos: f64,
    pub std_qos: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResults {
    /// Size of the constraint-eligible pool the methods chose from.
    pub eligible: usize,
    /// Mean QoS over the whole eligible pool.
    pub pool_mean_qos: f64,
    pub rows: Vec<BenchRow>,
}

impl BenchResults {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        write_rows_csv(&self.rows, out)
    }

    pub fn summary(&self) -> Vec<BenchSummary> {
        summarize(&self.rows)
    }

    /// Mean QoS of `method` at `group_size`, averaged over repetitions.
    pub fn mean_qos(&self, group_size: u32, method: &str) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.group_size == group_size && s.method == method)
            .map(|s| s.mean_qos)
    }
}

pub fn write_rows_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<BenchRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Groups rows by (group size, method), keeping the order in which methods
/// first appear.
pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut order: Vec<(u32, String)> = Vec::new();
    let mut groups: BTreeMap<(u32, String), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.group_size, r.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order.sort_by_key(|(g, _)| *g);
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let q: Vec<f64> = rs.iter().map(|r| r.mean_qos).collect();
            let t: Vec<f64> = rs.iter().map(|r| r.wall_ms).collect();
            let mean = canonical_mean(&q);
            let var = if q.len() > 1 {
                q.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (q.len() - 1) as f64
            } else {
                0.0
            };
            BenchSummary {
                group_size: key.0,
                method: key.1,
                repetitions: rs.len(),
                mean_qos: mean,
                std_qos: var.sqrt(),
                mean_wall_ms: canonical_mean(&t),
            }
        })
        .collect()
}

fn eligible_pool(population: &Population, spec: &BenchmarkSpec) -> Result<Vec<Eligible>, SimError> {
    let probe = spec.task.spec(1);
    let pool = population.workers.iter().filter(|w| w.covers(probe.domain));
    Ok(filter_candidates(&probe, pool, &spec.allocation)?.eligible)
}

fn measure(
    record_timing: bool,
    f: impl FnOnce() -> Result<SelectionReport, SimError>,
) -> Result<(SelectionReport, f64), SimError> {
    let start = Instant::now();
    let report = f()?;
    let ms = if record_timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    Ok((report, ms))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| SimError::InvalidSpec(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_grid(
    population: &Population,
    spec: &BenchmarkSpec,
    jobs: Option<usize>,
    methods: &[Method],
) -> Result<BenchResults, SimError> {
    spec.validate()?;
    let eligible = eligible_pool(population, spec)?;
    let qos: Vec<f64> = eligible.iter().map(|e| e.scores.qos).collect();
    let cells: Vec<(u32, u32)> = spec
        .group_sizes
        .iter()
        .flat_map(|&g| (0..spec.repetitions).map(move |r| (g, r)))
        .collect();
    let run_cell = |&(group_size, rep): &(u32, u32)| -> Result<Vec<BenchRow>, SimError> {
        let task = spec.task.spec(group_size);
        let seed = spec.seed.wrapping_add(u64::from(rep));
        let opt = OptimizerConfig {
            seed,
            ..spec.optimizer.clone()
        };
        methods
            .iter()
            .map(|&m| {
                let (report, wall_ms) = measure(spec.record_timing, || {
                    Ok(match m {
                        Method::Greedy => greedy_select(&task, &eligible),
                        Method::Genetic => ga_select(&task, &eligible, &opt)?.report,
                        Method::ParticleSwarm => pso_select(&task, &eligible, &opt)?.report,
                        Method::AntColony => aco_select(&task, &eligible, &opt)?.report,
                        Method::ReputationOnly => reputation_select(&task, &eligible),
                        Method::CpuOnly => cpu_select(&task, &eligible),
                        Method::Random => random_select(&task, &eligible, seed),
                        other => unreachable!("{} is not benchmarked", other.label()),
                    })
                })?;
                Ok(BenchRow {
                    group_size,
                    method: m.label().to_string(),
                    mean_qos: report.group_mean_qos(),
                    wall_ms,
                    seed,
                })
            })
            .collect()
    };
    let rows = with_pool(jobs, || {
        cells
            .par_iter()
            .map(run_cell)
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(BenchResults {
        eligible: eligible.len(),
        pool_mean_qos: canonical_mean(&qos),
        rows: rows.into_iter().flatten().collect(),
    })
}

/// Greedy against GA, PSO and ACO on every group size, each repetition with
/// its own optimizer seed. `jobs` bounds the worker threads (all cores when
/// `None`).
pub fn run_optimizer_benchmark(
    population: &Population,
    spec: &BenchmarkSpec,
    jobs: Option<usize>,
) -> Result<BenchResults, SimError> {
    run_grid(
        population,
        spec,
        jobs,
        &[
            Method::Greedy,
            Method::Genetic,
            Method::ParticleSwarm,
            Method::AntColony,
        ],
    )
}

/// Greedy against the reputation-only, compute-only and uniform random
/// selectors; every group is scored by full QoS.
pub fn run_baseline_benchmark(
    population: &Population,
    spec: &BenchmarkSpec,
    jobs: Option<usize>,
) -> Result<BenchResults, SimError> {
    run_grid(
        population,
        spec,
        jobs,
        &[
            Method::Greedy,
            Method::ReputationOnly,
            Method::CpuOnly,
            Method::Random,
        ],
    )
}
