//! Constraint filtering and greedy recruitment.
//!
//! Candidates are ranked by QoS (descending, ties broken by ascending worker
//! id) and the top `num_workers` are taken. Because the group objective is a
//! plain sum of per-worker QoS, this ranking is exact. The retraction variant
//! walks the same ranking, offering the task one worker at a time and moving
//! on whenever an offer is declined or lapses.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    DomainCode, ModelError, ModelRecord, Outcome, TaskId, TaskSpec, TaskType, WorkerId,
    WorkerProfile,
};
use crate::registry::WorkerRegistry;
use crate::scoring::{
    all_violations, compute_capability, expertise, model_similarity, AcceptedGpus, HistoryScores,
    ScoreBreakdown, ScoringConfig, ScoringError, SimilarityWeights, Violation,
};
use crate::store::ContentId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("no worker covers domain {0}")]
    EmptyDomain(DomainCode),

    #[error("no models registered in domain {0}")]
    NoModels(DomainCode),

    #[error("only {} of {} workers accepted", .0.selected.len(), .0.requested)]
    PoolExhausted(Box<SelectionReport>),

    #[error("task {task} is {actual}, expected {expected}")]
    WrongTaskType {
        task: TaskId,
        expected: TaskType,
        actual: TaskType,
    },

    #[error(transparent)]
    Scoring(#[from] ScoringError),

    #[error(transparent)]
    Counter(#[from] ModelError),
}

/// Platform-wide recruitment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocationConfig {
    pub accepted_gpus: AcceptedGpus,
    pub scoring: ScoringConfig,
    /// At most one model per owner in a sharing allocation.
    pub one_model_per_owner: bool,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        AllocationConfig {
            accepted_gpus: AcceptedGpus::default(),
            scoring: ScoringConfig::default(),
            one_model_per_owner: true,
        }
    }
}

/// A constraint-eligible candidate with frozen scores.
///
/// For training tasks `scores` is the full training breakdown. For model
/// sharing, filtering yields the owner's environment-independent score
/// (similarity 0); `allocate_models` expands owners into (owner, model)
/// pairs carrying the real similarity and `cid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eligible {
    pub worker_id: WorkerId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cid: Option<ContentId>,
    pub cpu_cores: u32,
    pub ram_gb: u32,
    pub scores: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub worker_id: WorkerId,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetractionReason {
    Declined,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retraction {
    pub worker_id: WorkerId,
    pub reason: RetractionReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selected {
    pub worker_id: WorkerId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cid: Option<ContentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    GreedyRetraction,
    ModelAllocation,
    Genetic,
    ParticleSwarm,
    AntColony,
    ReputationOnly,
    CpuOnly,
    Random,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::GreedyRetraction => "greedy_retraction",
            Method::ModelAllocation => "model_allocation",
            Method::Genetic => "ga",
            Method::ParticleSwarm => "pso",
            Method::AntColony => "aco",
            Method::ReputationOnly => "reputation",
            Method::CpuOnly => "cpu",
            Method::Random => "random",
        }
    }
}

/// Audit record of one recruitment decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub task_id: TaskId,
    pub method: Method,
    pub requested: u32,
    /// Ranked by QoS descending, ties by ascending worker id.
    pub ranked_candidates: Vec<Eligible>,
    pub selected: Vec<Selected>,
    pub rejected: Vec<Rejection>,
    pub retractions: Vec<Retraction>,
    /// Fewer than `requested` were selected.
    pub shortfall: bool,
}

impl SelectionReport {
    pub fn selected_ids(&self) -> Vec<WorkerId> {
        self.selected.iter().map(|s| s.worker_id.clone()).collect()
    }

    /// Mean QoS of the selected group, summed in canonical (descending)
    /// order so equal multisets give bit-identical results.
    pub fn group_mean_qos(&self) -> f64 {
        let by_key: BTreeMap<(&WorkerId, Option<&ContentId>), f64> = self
            .ranked_candidates
            .iter()
            .map(|c| ((&c.worker_id, c.cid.as_ref()), c.scores.qos))
            .collect();
        let values: Vec<f64> = self
            .selected
            .iter()
            .filter_map(|s| by_key.get(&(&s.worker_id, s.cid.as_ref())).copied())
            .collect();
        canonical_mean(&values)
    }

    /// One CSV row per ranked candidate.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let selected: BTreeSet<(&WorkerId, Option<&ContentId>)> = self
            .selected
            .iter()
            .map(|s| (&s.worker_id, s.cid.as_ref()))
            .collect();
        let retracted: BTreeMap<&WorkerId, RetractionReason> = self
            .retractions
            .iter()
            .map(|r| (&r.worker_id, r.reason))
            .collect();
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "task_id",
            "rank",
            "worker_id",
            "cid",
            "expertise",
            "reputation",
            "rating",
            "compute_capability",
            "similarity",
            "qos",
            "selected",
            "retraction",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (rank, c) in self.ranked_candidates.iter().enumerate() {
            let s = &c.scores;
            w.write_record([
                self.task_id.to_string(),
                (rank + 1).to_string(),
                c.worker_id.to_string(),
                c.cid.map(|x| x.to_string()).unwrap_or_default(),
                s.expertise.to_string(),
                s.reputation.to_string(),
                s.rating.to_string(),
                opt(s.compute_capability),
                opt(s.similarity),
                s.qos.to_string(),
                selected
                    .contains(&(&c.worker_id, c.cid.as_ref()))
                    .to_string(),
                retracted
                    .get(&c.worker_id)
                    .map(|r| match r {
                        RetractionReason::Declined => "declined",
                        RetractionReason::Timeout => "timeout",
                    })
                    .unwrap_or("")
                    .to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean of `values` summed largest-first.
pub fn canonical_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub eligible: Vec<Eligible>,
    pub rejected: Vec<Rejection>,
}

/// Partitions `workers` by the task's constraint predicates and scores the
/// eligible ones. Expertise is normalized over the eligible set only.
pub fn filter_candidates<'a>(
    task: &TaskSpec,
    workers: impl IntoIterator<Item = &'a WorkerProfile>,
    config: &AllocationConfig,
) -> Result<FilterOutcome, AllocationError> {
    let mut passed: Vec<(&WorkerProfile, HistoryScores)> = Vec::new();
    let mut rejected = Vec::new();
    let mut any_covers = false;
    for worker in workers {
        any_covers |= worker.covers(task.domain);
        let counters = worker.counters(task.domain, task.kind);
        let history = HistoryScores::from_counters(&counters, config.scoring.rating_prior)?;
        let violations = all_violations(worker, &history, task, &config.accepted_gpus);
        if violations.is_empty() {
            passed.push((worker, history));
        } else {
            rejected.push(Rejection {
                worker_id: worker.worker_id.clone(),
                violations,
            });
        }
    }
    if !any_covers {
        return Err(AllocationError::EmptyDomain(task.domain));
    }
    let pool_max = passed.iter().map(|(_, h)| h.completed).max().unwrap_or(0);
    let eligible = passed
        .into_iter()
        .map(|(w, h)| {
            let exp = expertise(h.completed, pool_max);
            let scores = match task.kind {
                TaskType::Training => ScoreBreakdown::training(
                    exp,
                    h.reputation,
                    h.rating,
                    compute_capability(w.compute.cpu_cores, config.scoring.cc_weight),
                ),
                TaskType::ModelSharing => ScoreBreakdown::sharing(exp, h.reputation, h.rating, 0.0),
            };
            Eligible {
                worker_id: w.worker_id.clone(),
                cid: None,
                cpu_cores: w.compute.cpu_cores,
                ram_gb: w.compute.ram_gb,
                scores,
            }
        })
        .collect();
    Ok(FilterOutcome { eligible, rejected })
}

/// QoS descending, then worker id ascending, then cid ascending.
pub fn rank_order(a: &Eligible, b: &Eligible) -> Ordering {
    b.scores
        .qos
        .total_cmp(&a.scores.qos)
        .then_with(|| a.worker_id.cmp(&b.worker_id))
        .then_with(|| a.cid.cmp(&b.cid))
}

/// Stable merge sort of indices that also counts comparisons. The count
/// feeds the ledger's cost model, so it must not depend on the standard
/// library's sort internals.
pub fn counted_sort_by<T>(
    items: &[T],
    mut cmp: impl FnMut(&T, &T) -> Ordering,
) -> (Vec<usize>, u64) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut buf = idx.clone();
    let mut comparisons = 0u64;
    let n = idx.len();
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                comparisons += 1;
                if cmp(&items[idx[j]], &items[idx[i]]) == Ordering::Less {
                    buf[k] = idx[j];
                    j += 1;
                } else {
                    buf[k] = idx[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&idx[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&idx[j..end]);
            start = end;
        }
        std::mem::swap(&mut idx, &mut buf);
        width *= 2;
    }
    (idx, comparisons)
}

/// Ranks candidates and returns them along with the comparison count.
pub fn rank(eligible: &[Eligible]) -> (Vec<Eligible>, u64) {
    let (order, comparisons) = counted_sort_by(eligible, rank_order);
    (
        order.into_iter().map(|i| eligible[i].clone()).collect(),
        comparisons,
    )
}

fn empty_report(task: &TaskSpec, method: Method, ranked: Vec<Eligible>) -> SelectionReport {
    SelectionReport {
        task_id: task.task_id.clone(),
        method,
        requested: task.num_workers,
        ranked_candidates: ranked,
        selected: Vec::new(),
        rejected: Vec::new(),
        retractions: Vec::new(),
        shortfall: false,
    }
}

/// Takes the top `num_workers` of the ranking. When `one_per_owner` is set,
/// later entries of an already selected owner are skipped.
fn take_top(ranked: &[Eligible], want: usize, one_per_owner: bool) -> Vec<Selected> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(want);
    for c in ranked {
        if out.len() == want {
            break;
        }
        if one_per_owner && !seen.insert(&c.worker_id) {
            continue;
        }
        out.push(Selected {
            worker_id: c.worker_id.clone(),
            cid: c.cid,
        });
    }
    out
}

/// Greedy top-`num_workers` selection.
pub fn greedy_select(task: &TaskSpec, eligible: &[Eligible]) -> SelectionReport {
    greedy_select_counted(task, eligible).0
}

pub fn greedy_select_counted(task: &TaskSpec, eligible: &[Eligible]) -> (SelectionReport, u64) {
    let (ranked, comparisons) = rank(eligible);
    let selected = take_top(&ranked, task.num_workers as usize, false);
    let mut report = empty_report(task, Method::Greedy, ranked);
    report.shortfall = selected.len() < task.num_workers as usize;
    report.selected = selected;
    (report, comparisons)
}

/// A worker's reply to a task offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "response", rename_all = "snake_case")]
pub enum OfferResponse {
    /// Accepted `latency` ticks after the offer.
    Accept {
        latency: u64,
    },
    Decline,
    /// No reply at all.
    Silent,
}

pub trait AcceptanceOracle {
    fn respond(&mut self, worker: &WorkerId, task: &TaskSpec) -> OfferResponse;
}

impl<F> AcceptanceOracle for F
where
    F: FnMut(&WorkerId, &TaskSpec) -> OfferResponse,
{
    fn respond(&mut self, worker: &WorkerId, task: &TaskSpec) -> OfferResponse {
        self(worker, task)
    }
}

/// Replays fixed responses; unknown workers stay silent.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle(pub BTreeMap<WorkerId, OfferResponse>);

impl AcceptanceOracle for ScriptedOracle {
    fn respond(&mut self, worker: &WorkerId, _task: &TaskSpec) -> OfferResponse {
        self.0.get(worker).copied().unwrap_or(OfferResponse::Silent)
    }
}

/// Receives the counter updates an allocation produces.
pub trait OutcomeSink {
    fn record(
        &mut self,
        worker: &WorkerId,
        domain: DomainCode,
        kind: TaskType,
        outcome: Outcome,
    ) -> Result<(), ModelError>;
}

impl OutcomeSink for WorkerRegistry {
    fn record(
        &mut self,
        worker: &WorkerId,
        domain: DomainCode,
        kind: TaskType,
        outcome: Outcome,
    ) -> Result<(), ModelError> {
        self.record_outcome(worker, domain, kind, outcome)
    }
}

/// Collects updates without applying them.
#[derive(Debug, Default)]
pub struct RecordingSink(pub Vec<(WorkerId, Outcome)>);

impl OutcomeSink for RecordingSink {
    fn record(
        &mut self,
        worker: &WorkerId,
        _domain: DomainCode,
        _kind: TaskType,
        outcome: Outcome,
    ) -> Result<(), ModelError> {
        self.0.push((worker.clone(), outcome));
        Ok(())
    }
}

/// Default acceptance window: a tenth of the task's time constraint.
pub fn default_acceptance_window(task: &TaskSpec) -> u64 {
    task.time_constraint / 10
}

/// Walks the ranking, offering the task until `num_workers` acceptances or
/// the pool runs out. Each offer records `Assigned`, each acceptance within
/// `window` records `Accepted`; declines and lapsed offers are retracted.
///
/// Scores stay frozen at filter time for the whole walk. Returns
/// `PoolExhausted` carrying the partial report if the group cannot be
/// filled.
pub fn allocate_with_retraction(
    task: &TaskSpec,
    eligible: &[Eligible],
    oracle: &mut dyn AcceptanceOracle,
    window: u64,
    sink: &mut dyn OutcomeSink,
) -> Result<SelectionReport, AllocationError> {
    let (report, _) = retraction_walk(task, eligible, oracle, window, sink)?;
    if report.shortfall {
        return Err(AllocationError::PoolExhausted(Box::new(report)));
    }
    Ok(report)
}

/// The walk behind [`allocate_with_retraction`]. A short group is returned
/// as an ordinary report with `shortfall` set, together with the number of
/// comparisons spent ranking.
pub fn retraction_walk(
    task: &TaskSpec,
    eligible: &[Eligible],
    oracle: &mut dyn AcceptanceOracle,
    window: u64,
    sink: &mut dyn OutcomeSink,
) -> Result<(SelectionReport, u64), AllocationError> {
    let (ranked, comparisons) = rank(eligible);
    let want = task.num_workers as usize;
    let mut selected = Vec::new();
    let mut retractions = Vec::new();
    for c in &ranked {
        if selected.len() == want {
            break;
        }
        sink.record(&c.worker_id, task.domain, task.kind, Outcome::Assigned)?;
        match oracle.respond(&c.worker_id, task) {
            OfferResponse::Accept { latency } if latency <= window => {
                sink.record(&c.worker_id, task.domain, task.kind, Outcome::Accepted)?;
                selected.push(Selected {
                    worker_id: c.worker_id.clone(),
                    cid: None,
                });
            }
            OfferResponse::Decline => retractions.push(Retraction {
                worker_id: c.worker_id.clone(),
                reason: RetractionReason::Declined,
            }),
            OfferResponse::Accept { .. } | OfferResponse::Silent => retractions.push(Retraction {
                worker_id: c.worker_id.clone(),
                reason: RetractionReason::Timeout,
            }),
        }
    }
    let mut report = empty_report(task, Method::GreedyRetraction, ranked);
    report.shortfall = selected.len() < want;
    report.selected = selected;
    report.retractions = retractions;
    Ok((report, comparisons))
}

/// Picks the best (owner, model) pairs for a model-sharing task.
pub fn allocate_models<'a>(
    task: &TaskSpec,
    models: &[ModelRecord],
    workers: impl IntoIterator<Item = &'a WorkerProfile>,
    config: &AllocationConfig,
) -> Result<SelectionReport, AllocationError> {
    allocate_models_counted(task, models, workers, config).map(|(r, _)| r)
}

pub fn allocate_models_counted<'a>(
    task: &TaskSpec,
    models: &[ModelRecord],
    workers: impl IntoIterator<Item = &'a WorkerProfile>,
    config: &AllocationConfig,
) -> Result<(SelectionReport, u64), AllocationError> {
    if task.kind != TaskType::ModelSharing {
        return Err(AllocationError::WrongTaskType {
            task: task.task_id.clone(),
            expected: TaskType::ModelSharing,
            actual: task.kind,
        });
    }
    let models: Vec<&ModelRecord> = models.iter().filter(|m| m.domain == task.domain).collect();
    if models.is_empty() {
        return Err(AllocationError::NoModels(task.domain));
    }
    let env = task
        .env_features
        .as_ref()
        .ok_or_else(|| ModelError::InvalidTask("model sharing task without env_features".into()))?;
    let weights = task
        .similarity_weights
        .clone()
        .unwrap_or_else(|| SimilarityWeights::uniform(env.dim()));

    let owners: BTreeSet<&WorkerId> = models.iter().map(|m| &m.owner_id).collect();
    let candidates: Vec<&WorkerProfile> = workers
        .into_iter()
        .filter(|w| owners.contains(&w.worker_id))
        .collect();
    let filtered = match filter_candidates(task, candidates, config) {
        Ok(f) => f,
        Err(AllocationError::EmptyDomain(_)) => FilterOutcome::default(),
        Err(e) => return Err(e),
    };

    let mut pairs = Vec::new();
    for owner in &filtered.eligible {
        for m in models.iter().filter(|m| m.owner_id == owner.worker_id) {
            let s = model_similarity(&m.env_features, env, &weights)?;
            let base = owner.scores;
            pairs.push(Eligible {
                worker_id: owner.worker_id.clone(),
                cid: Some(m.cid),
                cpu_cores: owner.cpu_cores,
                ram_gb: owner.ram_gb,
                scores: ScoreBreakdown::sharing(base.expertise, base.reputation, base.rating, s),
            });
        }
    }
    let (ranked, comparisons) = rank(&pairs);
    let selected = take_top(
        &ranked,
        task.num_workers as usize,
        config.one_model_per_owner,
    );
    let mut report = empty_report(task, Method::ModelAllocation, ranked);
    report.shortfall = selected.len() < task.num_workers as usize;
    report.selected = selected;
    report.rejected = filtered.rejected;
    Ok((report, comparisons))
}
