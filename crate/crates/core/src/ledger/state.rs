use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::event::{Call, CallKind, LedgerEvent};
use super::LedgerError;
use crate::allocation::{
    allocate_models_counted, default_acceptance_window, filter_candidates, retraction_walk,
    AllocationConfig, RecordingSink, Retraction, ScriptedOracle, Selected, SelectionReport,
};
use crate::model::{
    DomainCode, ModelRecord, Outcome, RequesterId, TaskId, TaskSpec, TaskStatus, TaskType, WorkerId,
};
use crate::registry::WorkerRegistry;
use crate::scoring::ScoreBreakdown;
use crate::store::ContentId;

/// Hex-encoded SHA-256 value.
pub type Digest32 = String;

fn sha256_hex(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// What the state keeps of an allocation: the group, the retractions and
/// the frozen scores of every worker that was offered the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub selected: Vec<Selected>,
    pub retractions: Vec<Retraction>,
    pub offered_scores: Vec<(WorkerId, ScoreBreakdown)>,
    pub eligible_count: usize,
    pub rejected_count: usize,
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payment {
    pub worker_id: WorkerId,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub spec: TaskSpec,
    pub allocation: Option<AllocationRecord>,
    pub outcomes: BTreeMap<WorkerId, ContentId>,
    pub feedback: BTreeMap<WorkerId, u32>,
    pub payments: Vec<Payment>,
}

impl TaskRecord {
    pub fn status(&self) -> TaskStatus {
        self.spec.status
    }

    fn is_selected(&self, worker: &WorkerId) -> bool {
        self.allocation
            .as_ref()
            .is_some_and(|a| a.selected.iter().any(|s| &s.worker_id == worker))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedEvent {
    pub seq: u64,
    pub call: CallKind,
    pub reason: String,
}

/// Result of applying one event.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Accepted {
        /// Full selection report for allocation calls.
        report: Option<Box<SelectionReport>>,
    },
    Rejected(LedgerError),
}

impl Applied {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Applied::Accepted { .. })
    }

    pub fn report(&self) -> Option<&SelectionReport> {
        match self {
            Applied::Accepted { report } => report.as_deref(),
            Applied::Rejected(_) => None,
        }
    }
}

/// Full contract state: users (workers, requesters), tasks, models, the
/// rejection log and the per-call cost table. It is a pure fold of the
/// event sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerState {
    pub config: AllocationConfig,
    /// Hash chain over every applied event's canonical bytes.
    pub head: Digest32,
    pub last_seq: u64,
    pub workers: WorkerRegistry,
    pub requesters: BTreeSet<RequesterId>,
    pub tasks: BTreeMap<TaskId, TaskRecord>,
    pub domain_tasks: BTreeMap<DomainCode, Vec<TaskId>>,
    pub domain_models: BTreeMap<DomainCode, Vec<ModelRecord>>,
    /// Environment dimensionality fixed by the first model or sharing task
    /// seen in a domain.
    pub domain_dims: BTreeMap<DomainCode, usize>,
    pub rejections: Vec<RejectedEvent>,
    pub op_costs: BTreeMap<CallKind, u64>,
}

impl LedgerState {
    pub fn genesis(config: AllocationConfig) -> Self {
        let config_bytes = serde_json::to_vec(&config).expect("config serializes");
        LedgerState {
            head: sha256_hex(&[b"crowdrl-genesis", &config_bytes]),
            config,
            last_seq: 0,
            workers: WorkerRegistry::new(),
            requesters: BTreeSet::new(),
            tasks: BTreeMap::new(),
            domain_tasks: BTreeMap::new(),
            domain_models: BTreeMap::new(),
            domain_dims: BTreeMap::new(),
            rejections: Vec::new(),
            op_costs: CallKind::ALL.iter().map(|&k| (k, 0)).collect(),
        }
    }

    /// SHA-256 of the canonical JSON encoding of the whole state.
    pub fn digest(&self) -> Digest32 {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        sha256_hex(&[&bytes])
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskRecord> {
        self.tasks.get(id)
    }

    pub fn cost(&self, call: CallKind) -> u64 {
        self.op_costs.get(&call).copied().unwrap_or(0)
    }

    /// Applies `event`. A sequence gap is a hard error; any other failure
    /// rejects the event, which is logged but leaves domain state untouched.
    pub fn apply(&mut self, event: &LedgerEvent) -> Result<Applied, LedgerError> {
        if event.seq != self.last_seq + 1 {
            return Err(LedgerError::SequenceGap {
                expected: self.last_seq + 1,
                got: event.seq,
            });
        }
        self.last_seq = event.seq;
        self.head = sha256_hex(&[self.head.as_bytes(), &event.canonical_bytes()]);
        let kind = event.call.kind();
        match self.dispatch(event) {
            Ok((cost, report)) => {
                *self.op_costs.entry(kind).or_default() += cost;
                Ok(Applied::Accepted { report })
            }
            Err(e) => {
                self.rejections.push(RejectedEvent {
                    seq: event.seq,
                    call: kind,
                    reason: e.to_string(),
                });
                Ok(Applied::Rejected(e))
            }
        }
    }

    fn task_mut(&mut self, id: &TaskId) -> Result<&mut TaskRecord, LedgerError> {
        self.tasks
            .get_mut(id)
            .ok_or_else(|| LedgerError::UnknownTask(id.clone()))
    }

    fn requester_of(&self, id: &TaskId, actor: &WorkerId) -> Result<&TaskRecord, LedgerError> {
        let task = self
            .tasks
            .get(id)
            .ok_or_else(|| LedgerError::UnknownTask(id.clone()))?;
        if &task.spec.requester_id != actor {
            return Err(LedgerError::NotAuthorized(actor.clone()));
        }
        Ok(task)
    }

    fn expect_status(task: &TaskRecord, wanted: TaskStatus) -> Result<(), LedgerError> {
        if task.status() != wanted {
            return Err(LedgerError::WrongStatus {
                task: task.spec.task_id.clone(),
                status: task.status(),
                wanted,
            });
        }
        Ok(())
    }

    /// Runs one call. Every handler validates before it mutates, so an
    /// `Err` leaves the state as it was. Returns the call's cost in state
    /// cells read plus written.
    fn dispatch(
        &mut self,
        event: &LedgerEvent,
    ) -> Result<(u64, Option<Box<SelectionReport>>), LedgerError> {
        let actor = &event.actor;
        let authorize = |who: &WorkerId| {
            if actor == who {
                Ok(())
            } else {
                Err(LedgerError::NotAuthorized(actor.clone()))
            }
        };
        match &event.call {
            Call::AddWorker { profile } => {
                authorize(&profile.worker_id)?;
                let scanned = self.workers.len() as u64;
                self.workers.register_worker(profile.clone())?;
                let stored = self
                    .workers
                    .get(&profile.worker_id)
                    .expect("just registered");
                let writes = 1 + stored.domains.len() as u64 + stored.stats.len() as u64;
                Ok((scanned + writes, None))
            }
            Call::AddRequester { requester_id } => {
                authorize(requester_id)?;
                let scanned = self.requesters.len() as u64;
                if !self.requesters.insert(requester_id.clone()) {
                    return Err(LedgerError::DuplicateRequester(requester_id.clone()));
                }
                Ok((scanned + 1, None))
            }
            Call::UpdateStatus { worker_id, status } => {
                authorize(worker_id)?;
                self.workers.set_status(worker_id, *status)?;
                Ok((2, None))
            }
            Call::UpdateInfo {
                worker_id,
                domain,
                kind,
                outcome,
            } => {
                self.workers
                    .record_outcome(worker_id, *domain, *kind, *outcome)?;
                Ok((2, None))
            }
            Call::AddTask { task } => self.add_task(actor, task),
            Call::AllocateTask { task_id, responses } => {
                self.allocate_task(actor, task_id, responses)
            }
            Call::UpdateTaskStatus { task_id, status } => {
                let record = self.requester_of(task_id, actor)?;
                let current = record.status();
                let allowed = current.can_transition(*status)
                    && *status != TaskStatus::Allocated
                    && (*status != TaskStatus::Completed || !record.outcomes.is_empty());
                if !allowed {
                    return Err(LedgerError::WrongStatus {
                        task: task_id.clone(),
                        status: current,
                        wanted: *status,
                    });
                }
                self.task_mut(task_id)?.spec.status = *status;
                Ok((2, None))
            }
            Call::SubmitOutcome {
                task_id,
                worker_id,
                cid,
            } => {
                authorize(worker_id)?;
                let record = self
                    .tasks
                    .get(task_id)
                    .ok_or_else(|| LedgerError::UnknownTask(task_id.clone()))?;
                Self::expect_status(record, TaskStatus::Allocated)?;
                if !record.is_selected(worker_id) {
                    return Err(LedgerError::NotSelectedWorker(worker_id.clone()));
                }
                if record.outcomes.contains_key(worker_id) {
                    return Err(LedgerError::DuplicateOutcome(worker_id.clone()));
                }
                let (domain, kind) = (record.spec.domain, record.spec.kind);
                self.workers
                    .record_outcome(worker_id, domain, kind, Outcome::Completed)?;
                let record = self.task_mut(task_id)?;
                record.outcomes.insert(worker_id.clone(), *cid);
                let selected = record.allocation.as_ref().map_or(0, |a| a.selected.len());
                if record.outcomes.len() == selected {
                    record.spec.status = TaskStatus::Completed;
                }
                Ok((4, None))
            }
            Call::AddModel { model } => {
                authorize(&model.owner_id)?;
                if !self.workers.contains(&model.owner_id) {
                    return Err(LedgerError::UnknownOwner(model.owner_id.clone()));
                }
                model.validate()?;
                let existing = self.domain_models.get(&model.domain);
                let scanned = existing.map_or(0, |m| m.len()) as u64;
                if existing.is_some_and(|ms| ms.iter().any(|m| m.cid == model.cid)) {
                    return Err(LedgerError::DuplicateModel(model.cid));
                }
                self.check_dim(model.domain, model.env_features.dim())?;
                self.domain_dims
                    .entry(model.domain)
                    .or_insert(model.env_features.dim());
                self.domain_models
                    .entry(model.domain)
                    .or_default()
                    .push(model.clone());
                Ok((scanned + 1, None))
            }
            Call::AllocateModel { task_id } => self.allocate_model(actor, task_id),
            Call::SubmitFeedback {
                task_id,
                worker_id,
                rating_points,
            } => {
                let record = self.requester_of(task_id, actor)?;
                Self::expect_status(record, TaskStatus::Completed)?;
                if !record.outcomes.contains_key(worker_id) {
                    return Err(LedgerError::NotParticipant(worker_id.clone()));
                }
                if record.feedback.contains_key(worker_id) {
                    return Err(LedgerError::DuplicateFeedback(worker_id.clone()));
                }
                let (domain, kind) = (record.spec.domain, record.spec.kind);
                self.workers.record_outcome(
                    worker_id,
                    domain,
                    kind,
                    Outcome::Rated(*rating_points),
                )?;
                self.task_mut(task_id)?
                    .feedback
                    .insert(worker_id.clone(), *rating_points);
                Ok((4, None))
            }
            Call::Pay {
                task_id,
                worker_id,
                amount,
            } => {
                let record = self.requester_of(task_id, actor)?;
                Self::expect_status(record, TaskStatus::Completed)?;
                if !record.outcomes.contains_key(worker_id) {
                    return Err(LedgerError::NotParticipant(worker_id.clone()));
                }
                self.task_mut(task_id)?.payments.push(Payment {
                    worker_id: worker_id.clone(),
                    amount: *amount,
                });
                Ok((3, None))
            }
        }
    }

    fn check_dim(&self, domain: DomainCode, dim: usize) -> Result<(), LedgerError> {
        match self.domain_dims.get(&domain) {
            Some(&d) if d != dim => Err(LedgerError::DimensionMismatch {
                domain,
                expected: d,
                got: dim,
            }),
            _ => Ok(()),
        }
    }

    fn add_task(
        &mut self,
        actor: &WorkerId,
        task: &TaskSpec,
    ) -> Result<(u64, Option<Box<SelectionReport>>), LedgerError> {
        if actor != &task.requester_id {
            return Err(LedgerError::NotAuthorized(actor.clone()));
        }
        if !self.requesters.contains(&task.requester_id) {
            return Err(LedgerError::UnknownRequester(task.requester_id.clone()));
        }
        if task.status != TaskStatus::Pending {
            return Err(LedgerError::WrongStatus {
                task: task.task_id.clone(),
                status: task.status,
                wanted: TaskStatus::Pending,
            });
        }
        task.validate()?;
        let scanned = self.tasks.len() as u64;
        if self.tasks.contains_key(&task.task_id) {
            return Err(LedgerError::DuplicateTask(task.task_id.clone()));
        }
        if let Some(env) = &task.env_features {
            self.check_dim(task.domain, env.dim())?;
            self.domain_dims.entry(task.domain).or_insert(env.dim());
        }
        self.domain_tasks
            .entry(task.domain)
            .or_default()
            .push(task.task_id.clone());
        self.tasks.insert(
            task.task_id.clone(),
            TaskRecord {
                spec: task.clone(),
                allocation: None,
                outcomes: BTreeMap::new(),
                feedback: BTreeMap::new(),
                payments: Vec::new(),
            },
        );
        Ok((scanned + 1, None))
    }

    fn allocate_task(
        &mut self,
        actor: &WorkerId,
        task_id: &TaskId,
        responses: &BTreeMap<WorkerId, crate::allocation::OfferResponse>,
    ) -> Result<(u64, Option<Box<SelectionReport>>), LedgerError> {
        let record = self.requester_of(task_id, actor)?;
        Self::expect_status(record, TaskStatus::Pending)?;
        let spec = record.spec.clone();
        if spec.kind != TaskType::Training {
            return Err(LedgerError::WrongTaskType {
                task: task_id.clone(),
                expected: TaskType::Training,
            });
        }
        let domain_workers = self.workers.workers_in_domain(spec.domain);
        let pool_size = domain_workers.len() as u64;
        let filtered = filter_candidates(&spec, domain_workers, &self.config)?;
        let mut oracle = ScriptedOracle(responses.clone());
        let mut sink = RecordingSink::default();
        let (mut report, comparisons) = retraction_walk(
            &spec,
            &filtered.eligible,
            &mut oracle,
            default_acceptance_window(&spec),
            &mut sink,
        )?;
        report.rejected = filtered.rejected;

        for (worker, outcome) in &sink.0 {
            self.workers
                .record_outcome(worker, spec.domain, spec.kind, *outcome)?;
        }
        let offered: BTreeSet<&WorkerId> = sink.0.iter().map(|(w, _)| w).collect();
        let offered_scores = report
            .ranked_candidates
            .iter()
            .filter(|c| offered.contains(&c.worker_id))
            .map(|c| (c.worker_id.clone(), c.scores))
            .collect();
        let status = if report.selected.is_empty() {
            TaskStatus::Failed
        } else {
            TaskStatus::Allocated
        };
        let record = self.task_mut(task_id)?;
        record.spec.status = status;
        record.allocation = Some(AllocationRecord {
            selected: report.selected.clone(),
            retractions: report.retractions.clone(),
            offered_scores,
            eligible_count: report.ranked_candidates.len(),
            rejected_count: report.rejected.len(),
            shortfall: report.shortfall,
        });
        let reads = 1 + 2 * pool_size + comparisons;
        let writes = sink.0.len() as u64 + 2;
        Ok((reads + writes, Some(Box::new(report))))
    }

    fn allocate_model(
        &mut self,
        actor: &WorkerId,
        task_id: &TaskId,
    ) -> Result<(u64, Option<Box<SelectionReport>>), LedgerError> {
        let record = self.requester_of(task_id, actor)?;
        Self::expect_status(record, TaskStatus::Pending)?;
        let spec = record.spec.clone();
        if spec.kind != TaskType::ModelSharing {
            return Err(LedgerError::WrongTaskType {
                task: task_id.clone(),
                expected: TaskType::ModelSharing,
            });
        }
        let models = self
            .domain_models
            .get(&spec.domain)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let (report, comparisons) =
            allocate_models_counted(&spec, models, self.workers.iter(), &self.config)?;
        let model_count = models.len() as u64;

        let mut updates = Vec::new();
        for s in &report.selected {
            for o in [Outcome::Assigned, Outcome::Accepted, Outcome::Completed] {
                updates.push((s.worker_id.clone(), o));
            }
        }
        for (worker, outcome) in &updates {
            self.workers
                .record_outcome(worker, spec.domain, spec.kind, *outcome)?;
        }
        let offered_scores = report
            .ranked_candidates
            .iter()
            .filter(|c| {
                report
                    .selected
                    .iter()
                    .any(|s| s.worker_id == c.worker_id && s.cid == c.cid)
            })
            .map(|c| (c.worker_id.clone(), c.scores))
            .collect();
        let record = self.task_mut(task_id)?;
        if report.selected.is_empty() {
            record.spec.status = TaskStatus::Failed;
        } else {
            // models are delivered on allocation
            record.spec.status = TaskStatus::Completed;
            for s in &report.selected {
                if let Some(cid) = s.cid {
                    record.outcomes.insert(s.worker_id.clone(), cid);
                }
            }
        }
        record.allocation = Some(AllocationRecord {
            selected: report.selected.clone(),
            retractions: Vec::new(),
            offered_scores,
            eligible_count: report.ranked_candidates.len(),
            rejected_count: report.rejected.len(),
            shortfall: report.shortfall,
        });
        let owners = self.workers.len() as u64;
        let reads = 1 + model_count + 2 * owners + comparisons;
        let writes = updates.len() as u64 + 2;
        Ok((reads + writes, Some(Box::new(report))))
    }
}
