use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::population::{LatentBehavior, Population, Span};
use super::SimError;
use crate::allocation::{AllocationConfig, OfferResponse};
use crate::ledger::{log_digest, Applied, Call, Ledger, LedgerEvent, LedgerState, LogHeader};
use crate::model::{
    Address, ComputeProfile, DomainCode, EnvFeatureVector, ModelRecord, TaskSpec, TaskStatus,
    TaskType, WorkerId, WorkerStatus,
};
use crate::scoring::{normalized_rating, HistoryScores};
use crate::store::BlobStore;

/// Distributions a task stream is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskStreamSpec {
    pub seed: u64,
    /// Tasks arrive on ticks `1..=ticks`.
    pub ticks: u64,
    pub tasks_per_tick: u32,
    pub requesters: u32,
    /// Domain codes are `0..domain_count`.
    pub domain_count: u32,
    pub num_workers: Span<u32>,
    pub min_reputation: Span<f64>,
    pub min_rating: Span<f64>,
    pub cpu_cores: Span<u32>,
    pub ram_gb: Span<u32>,
    pub time_constraint: Span<u64>,
    /// Probability that a task asks for a shared model instead of training.
    pub sharing_fraction: f64,
    /// Environment attributes per domain.
    pub env_dim: usize,
}

impl Default for TaskStreamSpec {
    fn default() -> Self {
        TaskStreamSpec {
            seed: 7,
            ticks: 100,
            tasks_per_tick: 2,
            requesters: 5,
            domain_count: 1,
            num_workers: Span::new(1, 5),
            min_reputation: Span::new(0.0, 0.5),
            min_rating: Span::new(0.0, 0.5),
            cpu_cores: Span::new(1, 8),
            ram_gb: Span::new(1, 32),
            time_constraint: Span::new(50, 200),
            sharing_fraction: 0.2,
            env_dim: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub tick: u64,
    pub task: TaskSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub requesters: Vec<Address>,
    /// Environment dimensionality used for models and sharing tasks.
    pub env_dim: usize,
    /// Sorted by tick.
    pub tasks: Vec<ScheduledTask>,
}

fn env_vector(rng: &mut impl Rng, dim: usize) -> EnvFeatureVector {
    EnvFeatureVector((0..dim).map(|_| rng.random::<f64>()).collect())
}

pub fn generate_task_stream(spec: &TaskStreamSpec) -> Result<TaskStream, SimError> {
    let bad = |m: &str| Err(SimError::InvalidSpec(m.into()));
    if spec.requesters == 0 {
        return bad("requesters must be positive");
    }
    if spec.domain_count == 0 {
        return bad("domain_count must be positive");
    }
    if spec.num_workers.min == 0 || spec.num_workers.min > spec.num_workers.max {
        return bad("num_workers must be a non-empty range of positive counts");
    }
    if spec.env_dim == 0 {
        return bad("env_dim must be positive");
    }
    if !(0.0..=1.0).contains(&spec.sharing_fraction) {
        return bad("sharing_fraction must lie in [0, 1]");
    }
    for (name, s) in [
        ("min_reputation", spec.min_reputation),
        ("min_rating", spec.min_rating),
    ] {
        if s.min > s.max || s.min < 0.0 || s.max > 1.0 {
            return Err(SimError::InvalidSpec(format!(
                "{name} must be a range within [0, 1]"
            )));
        }
    }
    if spec.cpu_cores.min > spec.cpu_cores.max
        || spec.ram_gb.min > spec.ram_gb.max
        || spec.time_constraint.min > spec.time_constraint.max
    {
        return bad("hardware and time ranges need min <= max");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let requesters: Vec<Address> = (0..spec.requesters)
        .map(|i| Address::derive("requester", u64::from(i)))
        .collect();
    let mut tasks = Vec::new();
    let mut next = 0u64;
    for tick in 1..=spec.ticks {
        for _ in 0..spec.tasks_per_tick {
            let sharing = rng.random_bool(spec.sharing_fraction);
            let requester = requesters[rng.random_range(0..requesters.len())].clone();
            let domain = DomainCode(rng.random_range(0..spec.domain_count));
            let num_workers = rng.random_range(spec.num_workers.min..=spec.num_workers.max);
            let min_reputation = sample_f64(&mut rng, spec.min_reputation);
            let min_rating = sample_f64(&mut rng, spec.min_rating);
            let time_constraint =
                rng.random_range(spec.time_constraint.min..=spec.time_constraint.max);
            let (kind, compute_req, env_features, num_workers) = if sharing {
                (
                    TaskType::ModelSharing,
                    None,
                    Some(env_vector(&mut rng, spec.env_dim)),
                    1,
                )
            } else {
                let req = ComputeProfile {
                    cpu_cores: rng.random_range(spec.cpu_cores.min..=spec.cpu_cores.max),
                    ram_gb: rng.random_range(spec.ram_gb.min..=spec.ram_gb.max),
                    gpu_series: None,
                };
                (TaskType::Training, Some(req), None, num_workers)
            };
            tasks.push(ScheduledTask {
                tick,
                task: TaskSpec {
                    task_id: Address::derive("task", next),
                    requester_id: requester,
                    kind,
                    domain,
                    description: String::new(),
                    num_workers,
                    min_reputation,
                    min_rating,
                    time_constraint,
                    compute_req,
                    env_features,
                    similarity_weights: None,
                    status: TaskStatus::Pending,
                },
            });
            next += 1;
        }
    }
    Ok(TaskStream {
        requesters,
        env_dim: spec.env_dim,
        tasks,
    })
}

fn sample_f64(rng: &mut impl Rng, s: Span<f64>) -> f64 {
    if s.min == s.max {
        s.min
    } else {
        rng.random_range(s.min..=s.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifecycleConfig {
    pub seed: u64,
    pub allocation: AllocationConfig,
    /// Amount paid per delivered outcome.
    pub payment: u64,
    /// Whether delivered training outcomes are registered as shareable
    /// models.
    pub publish_models: bool,
    /// Number of workers (in population order) whose counters are traced
    /// every tick.
    pub track_workers: usize,
    /// Probability that a worker who does not accept says so explicitly
    /// rather than staying silent.
    pub p_explicit_decline: f64,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        LifecycleConfig {
            seed: 11,
            allocation: AllocationConfig::default(),
            payment: 10,
            publish_models: true,
            track_workers: 10,
            p_explicit_decline: 0.5,
        }
    }
}

/// Platform-wide aggregates at the end of a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickMetrics {
    pub tick: u64,
    pub events: usize,
    pub rejections: usize,
    pub tasks: usize,
    pub pending: usize,
    pub allocated: usize,
    pub completed: usize,
    pub failed: usize,
    /// Mean training reputation over workers, each in its first domain.
    pub mean_reputation: f64,
    pub mean_rating: f64,
}

/// Counters and scores of one traced worker at the end of a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerTrace {
    pub tick: u64,
    pub worker_id: WorkerId,
    pub assigned: u64,
    pub accepted: u64,
    pub completed: u64,
    pub reputation: f64,
    pub rating: f64,
}

#[derive(Debug, Clone)]
pub struct LifecycleRun {
    pub header: LogHeader,
    pub events: Vec<LedgerEvent>,
    pub state: LedgerState,
    pub metrics: Vec<TickMetrics>,
    pub traces: Vec<WorkerTrace>,
}

impl LifecycleRun {
    pub fn state_digest(&self) -> String {
        self.state.digest()
    }

    pub fn log_digest(&self) -> String {
        log_digest(&self.header, &self.events)
    }

    pub fn write_metrics_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.metrics {
            w.serialize(m)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_traces_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.traces {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Driver<'a> {
    ledger: Ledger,
    rng: ChaCha8Rng,
    behavior: HashMap<WorkerId, LatentBehavior>,
    config: &'a LifecycleConfig,
    env_dim: usize,
}

impl Driver<'_> {
    fn submit(&mut self, actor: &Address, tick: u64, call: Call) -> Result<Applied, SimError> {
        Ok(self.ledger.submit(actor.clone(), tick, call)?)
    }

    fn latent(&self, w: &WorkerId) -> LatentBehavior {
        self.behavior
            .get(w)
            .copied()
            .unwrap_or(LatentBehavior::PERFECT)
    }

    fn run_training(&mut self, tick: u64, task: &TaskSpec) -> Result<(), SimError> {
        let window = crate::allocation::default_acceptance_window(task);
        let behavior = &self.behavior;
        let rng = &mut self.rng;
        let p_decline = self.config.p_explicit_decline;
        let mut oracle = |w: &WorkerId, _: &TaskSpec| {
            let b = behavior.get(w).copied().unwrap_or(LatentBehavior::PERFECT);
            if rng.random_bool(b.p_accept) {
                OfferResponse::Accept {
                    latency: rng.random_range(0..=window),
                }
            } else if rng.random_bool(p_decline) {
                OfferResponse::Decline
            } else {
                OfferResponse::Silent
            }
        };
        let applied = self.ledger.allocate_task(
            task.requester_id.clone(),
            tick,
            &task.task_id,
            &mut oracle,
        )?;
        let Some(report) = applied.report() else {
            return Ok(());
        };
        let selected = report.selected_ids();
        let mut delivered = Vec::new();
        for w in &selected {
            if !self.rng.random_bool(self.latent(w).p_complete) {
                continue;
            }
            let blob = format!("weights:{}:{}:{}", task.task_id, w, tick);
            let cid = self.ledger.store().put(blob.as_bytes())?;
            let a = self.submit(
                w,
                tick,
                Call::SubmitOutcome {
                    task_id: task.task_id.clone(),
                    worker_id: w.clone(),
                    cid,
                },
            )?;
            if !a.is_accepted() {
                continue;
            }
            delivered.push(w.clone());
            if self.config.publish_models {
                let model = ModelRecord {
                    owner_id: w.clone(),
                    cid,
                    domain: task.domain,
                    description: format!("trained for {}", task.task_id),
                    env_features: env_vector(&mut self.rng, self.env_dim),
                };
                self.submit(w, tick, Call::AddModel { model })?;
            }
        }
        let status = self.ledger.state().task(&task.task_id).map(|r| r.status());
        if status == Some(TaskStatus::Allocated) {
            let to = if delivered.is_empty() {
                TaskStatus::Failed
            } else {
                TaskStatus::Completed
            };
            self.submit(
                &task.requester_id,
                tick,
                Call::UpdateTaskStatus {
                    task_id: task.task_id.clone(),
                    status: to,
                },
            )?;
        }
        self.settle(tick, task, &delivered)
    }

    fn run_sharing(&mut self, tick: u64, task: &TaskSpec) -> Result<(), SimError> {
        let applied = self.submit(
            &task.requester_id,
            tick,
            Call::AllocateModel {
                task_id: task.task_id.clone(),
            },
        )?;
        let owners = applied
            .report()
            .map(|r| r.selected_ids())
            .unwrap_or_default();
        self.settle(tick, task, &owners)
    }

    /// Rates and pays every worker that delivered.
    fn settle(
        &mut self,
        tick: u64,
        task: &TaskSpec,
        delivered: &[WorkerId],
    ) -> Result<(), SimError> {
        for w in delivered {
            let points = self.latent(w).rating_points(&mut self.rng);
            self.submit(
                &task.requester_id,
                tick,
                Call::SubmitFeedback {
                    task_id: task.task_id.clone(),
                    worker_id: w.clone(),
                    rating_points: points,
                },
            )?;
            self.submit(
                &task.requester_id,
                tick,
                Call::Pay {
                    task_id: task.task_id.clone(),
                    worker_id: w.clone(),
                    amount: self.config.payment,
                },
            )?;
        }
        Ok(())
    }

    fn snapshot(
        &self,
        tick: u64,
        tracked: &[WorkerId],
        metrics: &mut Vec<TickMetrics>,
        traces: &mut Vec<WorkerTrace>,
    ) {
        let state = self.ledger.state();
        let prior = state.config.scoring.rating_prior;
        let mut count = [0usize; 4];
        for t in state.tasks.values() {
            let i = match t.status() {
                TaskStatus::Pending => 0,
                TaskStatus::Allocated => 1,
                TaskStatus::Completed => 2,
                TaskStatus::Failed => 3,
            };
            count[i] += 1;
        }
        let home = |w: &crate::model::WorkerProfile| {
            let d = *w
                .domains
                .iter()
                .next()
                .expect("validated profiles cover a domain");
            w.counters(d, TaskType::Training)
        };
        let mut rep = Vec::with_capacity(state.workers.len());
        let mut rating = Vec::with_capacity(state.workers.len());
        for w in state.workers.iter() {
            let c = home(w);
            if let Ok(h) = HistoryScores::from_counters(&c, prior) {
                rep.push(h.reputation);
                rating.push(h.rating);
            }
        }
        let mean = |v: &[f64]| crate::allocation::canonical_mean(v);
        metrics.push(TickMetrics {
            tick,
            events: self.ledger.events().len(),
            rejections: state.rejections.len(),
            tasks: state.tasks.len(),
            pending: count[0],
            allocated: count[1],
            completed: count[2],
            failed: count[3],
            mean_reputation: mean(&rep),
            mean_rating: mean(&rating),
        });
        for id in tracked {
            let Some(w) = state.workers.get(id) else {
                continue;
            };
            let c = home(w);
            let reputation = HistoryScores::from_counters(&c, prior)
                .map(|h| h.reputation)
                .unwrap_or(0.0);
            traces.push(WorkerTrace {
                tick,
                worker_id: id.clone(),
                assigned: c.assigned,
                accepted: c.accepted,
                completed: c.completed,
                reputation,
                rating: normalized_rating(c.rating_sum, c.rating_count, prior),
            });
        }
    }
}

/// Drives the full marketplace sequence through a ledger: registration at
/// tick 0, then for every scheduled task its submission, recruitment with
/// offers answered by the latent behavior, outcome delivery into `store`,
/// feedback and payment. Contract rejections are logged in the ledger and
/// never abort the run; only store failures do.
pub fn run_lifecycle(
    population: &Population,
    stream: &TaskStream,
    config: &LifecycleConfig,
    store: Arc<dyn BlobStore>,
) -> Result<LifecycleRun, SimError> {
    let mut driver = Driver {
        ledger: Ledger::new(config.allocation.clone(), store),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        behavior: population
            .workers
            .iter()
            .zip(&population.behavior)
            .map(|(w, b)| (w.worker_id.clone(), *b))
            .collect(),
        config,
        env_dim: stream.env_dim,
    };
    let tracked: Vec<WorkerId> = population
        .workers
        .iter()
        .take(config.track_workers)
        .map(|w| w.worker_id.clone())
        .collect();
    let mut metrics = Vec::new();
    let mut traces = Vec::new();

    for r in &stream.requesters {
        driver.submit(
            r,
            0,
            Call::AddRequester {
                requester_id: r.clone(),
            },
        )?;
    }
    for w in &population.workers {
        let id = w.worker_id.clone();
        let status = w.status;
        driver.submit(&id, 0, Call::AddWorker { profile: w.clone() })?;
        if status == WorkerStatus::Active {
            driver.submit(
                &id,
                0,
                Call::UpdateStatus {
                    worker_id: id.clone(),
                    status,
                },
            )?;
        }
    }
    driver.snapshot(0, &tracked, &mut metrics, &mut traces);

    let mut i = 0;
    let last_tick = stream.tasks.last().map_or(0, |t| t.tick);
    for tick in 1..=last_tick {
        while i < stream.tasks.len() && stream.tasks[i].tick == tick {
            let task = &stream.tasks[i].task;
            i += 1;
            let added = driver.submit(
                &task.requester_id,
                tick,
                Call::AddTask { task: task.clone() },
            )?;
            if !added.is_accepted() {
                continue;
            }
            match task.kind {
                TaskType::Training => driver.run_training(tick, task)?,
                TaskType::ModelSharing => driver.run_sharing(tick, task)?,
            }
        }
        driver.snapshot(tick, &tracked, &mut metrics, &mut traces);
    }

    let header = driver.ledger.header();
    let (state, events) = driver.ledger.into_parts();
    Ok(LifecycleRun {
        header,
        events,
        state,
        metrics,
        traces,
    })
}
