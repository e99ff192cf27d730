//! Recruitment metrics: expertise, commitment and completion rates,
//! reputation, rating, compute capability, environment similarity and the
//! two QoS aggregates, plus the per-task constraint predicates.
//!
//! Everything here is a pure function of its arguments.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_2_PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    EnvFeatureVector, PerfCounters, TaskSpec, TaskType, WorkerProfile, WorkerStatus,
    RATING_SCALE_MAX,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("{numerator} exceeds {denominator}")]
    BoundViolation { numerator: u64, denominator: u64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid similarity weights: {0}")]
    InvalidWeights(String),
}

/// Tunables of the scoring functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Stretch `w1` of the compute-capability arctangent.
    pub cc_weight: f64,
    /// Rating assigned to workers with no reviews yet.
    pub rating_prior: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            cc_weight: 0.1,
            rating_prior: 0.5,
        }
    }
}

/// Completed tasks relative to the best candidate in the pool.
/// An all-zero pool scores everyone 1.
pub fn expertise(worker_completed: u64, pool_max_completed: u64) -> f64 {
    if pool_max_completed == 0 {
        return 1.0;
    }
    (worker_completed as f64 / pool_max_completed as f64).min(1.0)
}

fn ratio(numerator: u64, denominator: u64) -> Result<f64, ScoringError> {
    if numerator > denominator {
        return Err(ScoringError::BoundViolation {
            numerator,
            denominator,
        });
    }
    if denominator == 0 {
        return Ok(1.0);
    }
    Ok(numerator as f64 / denominator as f64)
}

/// `accepted / assigned`; 1 for a worker never assigned anything.
pub fn commitment_rate(accepted: u64, assigned: u64) -> Result<f64, ScoringError> {
    ratio(accepted, assigned)
}

/// `completed / accepted`; 1 for a worker who never accepted anything.
pub fn completion_rate(completed: u64, accepted: u64) -> Result<f64, ScoringError> {
    ratio(completed, accepted)
}

/// Geometric mean of commitment and completion rates.
pub fn reputation(cm: f64, cp: f64) -> f64 {
    (cm * cp).sqrt()
}

/// Average review normalized to [0, 1], or `prior` with no reviews.
pub fn normalized_rating(rating_sum: u64, rating_count: u64, prior: f64) -> f64 {
    if rating_count == 0 {
        return prior;
    }
    rating_sum as f64 / (RATING_SCALE_MAX as f64 * rating_count as f64)
}

/// Saturating `(2/pi) * atan(w1 * cores)`.
pub fn compute_capability(cpu_cores: u32, w1: f64) -> f64 {
    FRAC_2_PI * (w1 * cpu_cores as f64).atan()
}

pub fn training_qos(exp: f64, rep: f64, rating: f64, cc: f64) -> f64 {
    exp * rep * rating * cc
}

pub fn sharing_qos(exp: f64, rep: f64, rating: f64, similarity: f64) -> f64 {
    exp * rep * rating / (1.0 + similarity)
}

/// Non-negative weights summing to one, one per environment attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimilarityWeights(Vec<f64>);

impl SimilarityWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self, ScoringError> {
        if weights.is_empty() {
            return Err(ScoringError::InvalidWeights("empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ScoringError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(ScoringError::InvalidWeights(format!("sum {sum} != 1")));
        }
        Ok(SimilarityWeights(weights))
    }

    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0, "uniform weights need at least one attribute");
        SimilarityWeights(vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SimilarityWeights {
    type Error = ScoringError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        SimilarityWeights::new(value)
    }
}

impl From<SimilarityWeights> for Vec<f64> {
    fn from(value: SimilarityWeights) -> Self {
        value.0
    }
}

/// Weighted L1 distance between environments. Lower is more similar.
pub fn model_similarity(
    model: &EnvFeatureVector,
    task: &EnvFeatureVector,
    weights: &SimilarityWeights,
) -> Result<f64, ScoringError> {
    if model.dim() != task.dim() {
        return Err(ScoringError::DimensionMismatch {
            left: model.dim(),
            right: task.dim(),
        });
    }
    if weights.dim() != model.dim() {
        return Err(ScoringError::DimensionMismatch {
            left: weights.dim(),
            right: model.dim(),
        });
    }
    Ok(weights
        .as_slice()
        .iter()
        .zip(model.0.iter().zip(&task.0))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum())
}

/// Per-component scores of one candidate and the resulting QoS.
///
/// Exactly one of `compute_capability` (training) and `similarity`
/// (model sharing) is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub expertise: f64,
    pub reputation: f64,
    pub rating: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_capability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    pub qos: f64,
}

impl ScoreBreakdown {
    pub fn training(expertise: f64, reputation: f64, rating: f64, cc: f64) -> Self {
        ScoreBreakdown {
            expertise,
            reputation,
            rating,
            compute_capability: Some(cc),
            similarity: None,
            qos: training_qos(expertise, reputation, rating, cc),
        }
    }

    pub fn sharing(expertise: f64, reputation: f64, rating: f64, similarity: f64) -> Self {
        ScoreBreakdown {
            expertise,
            reputation,
            rating,
            compute_capability: None,
            similarity: Some(similarity),
            qos: sharing_qos(expertise, reputation, rating, similarity),
        }
    }

    /// QoS rebuilt from the components.
    pub fn recomputed_qos(&self) -> f64 {
        match (self.compute_capability, self.similarity) {
            (Some(cc), _) => training_qos(self.expertise, self.reputation, self.rating, cc),
            (None, Some(s)) => sharing_qos(self.expertise, self.reputation, self.rating, s),
            (None, None) => f64::NAN,
        }
    }
}

/// History-derived scores of one worker in one (domain, type) cell. These do
/// not depend on the candidate pool, unlike expertise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryScores {
    pub commitment: f64,
    pub completion: f64,
    pub reputation: f64,
    pub rating: f64,
    pub completed: u64,
}

impl HistoryScores {
    pub fn from_counters(c: &PerfCounters, rating_prior: f64) -> Result<Self, ScoringError> {
        let commitment = commitment_rate(c.accepted, c.assigned)?;
        let completion = completion_rate(c.completed, c.accepted)?;
        Ok(HistoryScores {
            commitment,
            completion,
            reputation: reputation(commitment, completion),
            rating: normalized_rating(c.rating_sum, c.rating_count, rating_prior),
            completed: c.completed,
        })
    }
}

/// A failed constraint predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Reputation,
    Rating,
    Domain,
    Cpu,
    Ram,
    Gpu,
    /// Worker is idle, i.e. not accepting work.
    Status,
}

impl Violation {
    pub fn as_str(self) -> &'static str {
        match self {
            Violation::Reputation => "reputation",
            Violation::Rating => "rating",
            Violation::Domain => "domain",
            Violation::Cpu => "cpu",
            Violation::Ram => "ram",
            Violation::Gpu => "gpu",
            Violation::Status => "status",
        }
    }
}

/// Platform list of accepted GPU series. An empty list disables the GPU
/// predicate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AcceptedGpus(pub BTreeSet<String>);

impl AcceptedGpus {
    pub fn new<I, S>(series: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AcceptedGpus(series.into_iter().map(Into::into).collect())
    }

    pub fn admits(&self, gpu: Option<&str>) -> bool {
        if self.0.is_empty() {
            return true;
        }
        gpu.is_some_and(|g| self.0.contains(g))
    }
}

fn floor_checks(
    history: &HistoryScores,
    task: &TaskSpec,
    worker: &WorkerProfile,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if history.reputation < task.min_reputation {
        out.push(Violation::Reputation);
    }
    if history.rating < task.min_rating {
        out.push(Violation::Rating);
    }
    if !worker.covers(task.domain) {
        out.push(Violation::Domain);
    }
    out
}

/// Training predicates. Returns the violated predicates; empty means the
/// worker is eligible. All floors are inclusive.
pub fn training_constraints(
    worker: &WorkerProfile,
    history: &HistoryScores,
    task: &TaskSpec,
    accepted_gpus: &AcceptedGpus,
) -> Vec<Violation> {
    debug_assert_eq!(task.kind, TaskType::Training);
    let mut out = floor_checks(history, task, worker);
    if let Some(req) = &task.compute_req {
        if worker.compute.cpu_cores < req.cpu_cores {
            out.push(Violation::Cpu);
        }
        if worker.compute.ram_gb < req.ram_gb {
            out.push(Violation::Ram);
        }
    }
    if !accepted_gpus.admits(worker.compute.gpu_series.as_deref()) {
        out.push(Violation::Gpu);
    }
    out
}

/// Model-sharing predicates: reputation floor, rating floor, domain.
pub fn sharing_constraints(
    worker: &WorkerProfile,
    history: &HistoryScores,
    task: &TaskSpec,
) -> Vec<Violation> {
    debug_assert_eq!(task.kind, TaskType::ModelSharing);
    floor_checks(history, task, worker)
}

pub fn training_constraints_ok(
    worker: &WorkerProfile,
    history: &HistoryScores,
    task: &TaskSpec,
    accepted_gpus: &AcceptedGpus,
) -> (bool, Vec<Violation>) {
    let v = training_constraints(worker, history, task, accepted_gpus);
    (v.is_empty(), v)
}

pub fn sharing_constraints_ok(
    worker: &WorkerProfile,
    history: &HistoryScores,
    task: &TaskSpec,
) -> (bool, Vec<Violation>) {
    let v = sharing_constraints(worker, history, task);
    (v.is_empty(), v)
}

/// Every predicate that applies to `task`, including availability.
pub fn all_violations(
    worker: &WorkerProfile,
    history: &HistoryScores,
    task: &TaskSpec,
    accepted_gpus: &AcceptedGpus,
) -> Vec<Violation> {
    let mut v = match task.kind {
        TaskType::Training => training_constraints(worker, history, task, accepted_gpus),
        TaskType::ModelSharing => sharing_constraints(worker, history, task),
    };
    if task.kind == TaskType::Training && worker.status != WorkerStatus::Active {
        v.push(Violation::Status);
    }
    v
}
