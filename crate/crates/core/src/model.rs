//! Domain types shared by every subsystem: identifiers, worker and task
//! tuples, per-(domain, task type) performance counters and shared model
//! records.
//!
//! Every type serializes to JSON with stable snake_case field names; the
//! schemas under `docs/schemas/` describe the wire shapes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scoring::SimilarityWeights;
use crate::store::ContentId;

/// Upper bound of a single review, in rating points.
pub const RATING_SCALE_MAX: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid address {0:?}: expected 0x followed by 40 lowercase hex digits")]
    InvalidAddress(String),

    #[error("worker {0} is already registered")]
    DuplicateId(Address),

    #[error("unknown worker {0}")]
    UnknownWorker(Address),

    #[error("invalid worker profile: {0}")]
    InvalidProfile(String),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid model record: {0}")]
    InvalidModel(String),

    #[error("worker {worker} does not cover domain {domain}")]
    DomainNotCovered { worker: Address, domain: DomainCode },

    #[error("counter order violation: {0}")]
    CounterOrderViolation(String),

    #[error("rating {0} outside 0..={RATING_SCALE_MAX}")]
    RatingOutOfRange(u32),
}

/// A 20-byte account identifier rendered as `0x` + 40 lowercase hex digits.
///
/// Used for workers, requesters and tasks alike. Ordering is lexicographic on
/// the hex form, which is the tie-break order used by every selector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(String);

pub type WorkerId = Address;
pub type RequesterId = Address;
pub type TaskId = Address;

impl Address {
    pub const BYTES: usize = 20;

    pub fn from_bytes(bytes: [u8; Self::BYTES]) -> Self {
        Address(format!("0x{}", hex::encode(bytes)))
    }

    /// Deterministically derives an address from a namespace and an index.
    ///
    /// Simulation fixtures use this so that populations are reproducible
    /// without carrying any key material.
    pub fn derive(namespace: &str, index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(namespace.as_bytes());
        hasher.update(b":");
        hasher.update(index.to_be_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; Self::BYTES];
        bytes.copy_from_slice(&digest[..Self::BYTES]);
        Self::from_bytes(bytes)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Address {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex_part = s
            .strip_prefix("0x")
            .ok_or_else(|| ModelError::InvalidAddress(s.to_string()))?;
        let ok = hex_part.len() == 2 * Self::BYTES
            && hex_part
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if ok {
            Ok(Address(s.to_string()))
        } else {
            Err(ModelError::InvalidAddress(s.to_string()))
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Opaque application-domain index (e.g. "robot swarms").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainCode(pub u32);

impl fmt::Display for DomainCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Task type. Serialized as an integer: `0` = training, `1` = model sharing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskType {
    Training,
    ModelSharing,
}

impl TaskType {
    pub const ALL: [TaskType; 2] = [TaskType::Training, TaskType::ModelSharing];

    pub fn code(self) -> u8 {
        match self {
            TaskType::Training => 0,
            TaskType::ModelSharing => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TaskType::Training),
            1 => Some(TaskType::ModelSharing),
            _ => None,
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskType::Training => f.write_str("training"),
            TaskType::ModelSharing => f.write_str("model_sharing"),
        }
    }
}

impl Serialize for TaskType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for TaskType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = u8::deserialize(deserializer)?;
        TaskType::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown task type {code}")))
    }
}

/// Hardware a worker offers, or the floor a training task demands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeProfile {
    pub cpu_cores: u32,
    pub ram_gb: u32,
    /// Brand + series token; `None` means no GPU.
    #[serde(default)]
    pub gpu_series: Option<String>,
}

/// Historical performance of one worker in one (domain, task type) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerfCounters {
    pub assigned: u64,
    pub accepted: u64,
    pub completed: u64,
    pub rating_sum: u64,
    pub rating_count: u64,
}

/// A single counter-moving event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", content = "points", rename_all = "snake_case")]
pub enum Outcome {
    Assigned,
    Accepted,
    Completed,
    Rated(u32),
}

impl PerfCounters {
    pub fn new(assigned: u64, accepted: u64, completed: u64) -> Self {
        PerfCounters {
            assigned,
            accepted,
            completed,
            rating_sum: 0,
            rating_count: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.accepted > self.assigned {
            return Err(format!(
                "accepted {} exceeds assigned {}",
                self.accepted, self.assigned
            ));
        }
        if self.completed > self.accepted {
            return Err(format!(
                "completed {} exceeds accepted {}",
                self.completed, self.accepted
            ));
        }
        if self.rating_count > self.completed {
            return Err(format!(
                "rating_count {} exceeds completed {}",
                self.rating_count, self.completed
            ));
        }
        if self.rating_sum > self.rating_count.saturating_mul(RATING_SCALE_MAX as u64) {
            return Err(format!(
                "rating_sum {} exceeds {} x {}",
                self.rating_sum, self.rating_count, RATING_SCALE_MAX
            ));
        }
        Ok(())
    }

    /// Applies one outcome, refusing any step that would break
    /// `rating_count <= completed <= accepted <= assigned`.
    pub fn apply(&mut self, outcome: Outcome) -> Result<(), ModelError> {
        match outcome {
            Outcome::Assigned => self.assigned += 1,
            Outcome::Accepted => {
                if self.accepted >= self.assigned {
                    return Err(ModelError::CounterOrderViolation(format!(
                        "accepted would exceed assigned ({})",
                        self.assigned
                    )));
                }
                self.accepted += 1;
            }
            Outcome::Completed => {
                if self.completed >= self.accepted {
                    return Err(ModelError::CounterOrderViolation(format!(
                        "completed would exceed accepted ({})",
                        self.accepted
                    )));
                }
                self.completed += 1;
            }
            Outcome::Rated(points) => {
                if points > RATING_SCALE_MAX {
                    return Err(ModelError::RatingOutOfRange(points));
                }
                if self.rating_count >= self.completed {
                    return Err(ModelError::CounterOrderViolation(format!(
                        "rating without a matching completion ({} ratings, {} completed)",
                        self.rating_count, self.completed
                    )));
                }
                self.rating_sum += points as u64;
                self.rating_count += 1;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerStatus {
    Active,
    Idle,
}

/// Key of a worker's counter table.
pub type StatKey = (DomainCode, TaskType);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: WorkerId,
    pub domains: BTreeSet<DomainCode>,
    pub compute: ComputeProfile,
    #[serde(with = "stats_serde", default)]
    pub stats: BTreeMap<StatKey, PerfCounters>,
    pub status: WorkerStatus,
}

impl WorkerProfile {
    /// A fresh profile with zeroed counters in every (domain, type) cell.
    pub fn new(
        worker_id: WorkerId,
        domains: impl IntoIterator<Item = DomainCode>,
        compute: ComputeProfile,
    ) -> Self {
        let mut profile = WorkerProfile {
            worker_id,
            domains: domains.into_iter().collect(),
            compute,
            stats: BTreeMap::new(),
            status: WorkerStatus::Idle,
        };
        profile.fill_missing_cells();
        profile
    }

    pub fn fill_missing_cells(&mut self) {
        for &domain in &self.domains {
            for kind in TaskType::ALL {
                self.stats.entry((domain, kind)).or_default();
            }
        }
    }

    pub fn covers(&self, domain: DomainCode) -> bool {
        self.domains.contains(&domain)
    }

    /// Counters for a cell; all-zero when the worker has no history there.
    pub fn counters(&self, domain: DomainCode, kind: TaskType) -> PerfCounters {
        self.stats.get(&(domain, kind)).copied().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.domains.is_empty() {
            return Err(ModelError::InvalidProfile(format!(
                "worker {} covers no domain",
                self.worker_id
            )));
        }
        for ((domain, kind), counters) in &self.stats {
            if !self.domains.contains(domain) {
                return Err(ModelError::InvalidProfile(format!(
                    "counters for uncovered domain {domain}"
                )));
            }
            counters
                .validate()
                .map_err(|e| ModelError::InvalidProfile(format!("domain {domain} {kind}: {e}")))?;
        }
        Ok(())
    }
}

/// Ordered environment attributes `F_1..F_d` of a DRL problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvFeatureVector(pub Vec<f64>);

impl EnvFeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Allocated,
    Completed,
    Failed,
}

impl TaskStatus {
    /// Lifecycle edges: Pending -> Allocated -> {Completed, Failed}, and
    /// Pending -> Failed. Nothing ever moves backward.
    pub fn can_transition(self, to: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, to),
            (Pending, Allocated) | (Pending, Failed) | (Allocated, Completed) | (Allocated, Failed)
        )
    }
}

/// A requester's task tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub requester_id: RequesterId,
    pub kind: TaskType,
    pub domain: DomainCode,
    #[serde(default)]
    pub description: String,
    pub num_workers: u32,
    pub min_reputation: f64,
    pub min_rating: f64,
    pub time_constraint: u64,
    /// Hardware floor; present iff `kind` is training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_req: Option<ComputeProfile>,
    /// Desired environment; present iff `kind` is model sharing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_features: Option<EnvFeatureVector>,
    /// Per-attribute similarity weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_weights: Option<SimilarityWeights>,
    #[serde(default = "pending")]
    pub status: TaskStatus,
}

fn pending() -> TaskStatus {
    TaskStatus::Pending
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidTask(msg));
        if self.num_workers == 0 {
            return bad("num_workers must be at least 1".into());
        }
        for (name, v) in [
            ("min_reputation", self.min_reputation),
            ("min_rating", self.min_rating),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        match self.kind {
            TaskType::Training => {
                if self.compute_req.is_none() {
                    return bad("training task without compute_req".into());
                }
                if self.env_features.is_some() {
                    return bad("training task with env_features".into());
                }
            }
            TaskType::ModelSharing => {
                if self.compute_req.is_some() {
                    return bad("model sharing task with compute_req".into());
                }
                match &self.env_features {
                    None => return bad("model sharing task without env_features".into()),
                    Some(env) if !env.is_finite() => return bad("non-finite env_features".into()),
                    Some(env) => {
                        if let Some(w) = &self.similarity_weights {
                            if w.dim() != env.dim() {
                                return bad(format!(
                                    "{} similarity weights for {} features",
                                    w.dim(),
                                    env.dim()
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A pre-trained model offered for sharing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub owner_id: WorkerId,
    pub cid: ContentId,
    pub domain: DomainCode,
    #[serde(default)]
    pub description: String,
    pub env_features: EnvFeatureVector,
}

impl ModelRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.env_features.dim() == 0 || !self.env_features.is_finite() {
            return Err(ModelError::InvalidModel(
                "env_features must be a non-empty finite vector".into(),
            ));
        }
        Ok(())
    }
}

/// JSON maps need string keys, so the counter table travels as a list of
/// `{domain, kind, ...counters}` entries.
mod stats_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        domain: DomainCode,
        kind: TaskType,
        #[serde(flatten)]
        counters: PerfCounters,
    }

    pub fn serialize<S: Serializer>(
        stats: &BTreeMap<StatKey, PerfCounters>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(stats.iter().map(|(&(domain, kind), &counters)| Entry {
            domain,
            kind,
            counters,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<StatKey, PerfCounters>, D::Error> {
        let entries = Vec::<Entry>::deserialize(deserializer)?;
        let mut out = BTreeMap::new();
        for e in entries {
            if out.insert((e.domain, e.kind), e.counters).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate counters for domain {} kind {}",
                    e.domain, e.kind
                )));
            }
        }
        Ok(out)
    }
}
