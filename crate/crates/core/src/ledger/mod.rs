//! Event-sourced contract ledger.
//!
//! The users, tasks and models contracts are sub-state-machines of one
//! [`LedgerState`]. State only changes by appending a [`LedgerEvent`]; the
//! current state is the fold of the log from genesis, so replaying a log
//! always reproduces the same [`LedgerState::digest`].
//!
//! Calls that fail their preconditions are still appended, but only the
//! rejection log records them. Content ids are the exception: a call naming
//! a blob the store does not hold is refused before it reaches the log, so
//! replay never needs the store.

mod event;
mod log;
mod state;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::allocation::{
    default_acceptance_window, filter_candidates, retraction_walk, AcceptanceOracle,
    AllocationConfig, AllocationError, OfferResponse, RecordingSink,
};
use crate::model::{Address, DomainCode, ModelError, TaskId, TaskStatus, TaskType, WorkerId};
use crate::store::{BlobStore, ContentId};

pub use event::{Call, CallKind, LedgerEvent};
pub use log::{
    decode_log, encode_log, log_digest, read_log, write_log, LogError, LogHeader, LOG_FORMAT,
};
pub use state::{
    AllocationRecord, Applied, Digest32, LedgerState, Payment, RejectedEvent, TaskRecord,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },

    #[error("actor {0} is not authorized for this call")]
    NotAuthorized(Address),

    #[error("requester {0} already registered")]
    DuplicateRequester(Address),

    #[error("unknown requester {0}")]
    UnknownRequester(Address),

    #[error("task {0} already exists")]
    DuplicateTask(TaskId),

    #[error("unknown task {0}")]
    UnknownTask(TaskId),

    #[error("task {task} is {status:?}, needed {wanted:?}")]
    WrongStatus {
        task: TaskId,
        status: TaskStatus,
        wanted: TaskStatus,
    },

    #[error("task {task} is not a {expected} task")]
    WrongTaskType { task: TaskId, expected: TaskType },

    #[error("worker {0} was not selected for this task")]
    NotSelectedWorker(WorkerId),

    #[error("worker {0} already submitted an outcome")]
    DuplicateOutcome(WorkerId),

    #[error("worker {0} did not deliver an outcome for this task")]
    NotParticipant(WorkerId),

    #[error("feedback for worker {0} already recorded")]
    DuplicateFeedback(WorkerId),

    #[error("unknown content id {0}")]
    UnknownCid(ContentId),

    #[error("unknown model owner {0}")]
    UnknownOwner(Address),

    #[error("model {0} already registered in this domain")]
    DuplicateModel(ContentId),

    #[error("domain {domain} uses {expected} environment attributes, got {got}")]
    DimensionMismatch {
        domain: DomainCode,
        expected: usize,
        got: usize,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

/// Folds `events` onto genesis. Events must be gapless from seq 1.
pub fn replay<'a>(
    config: AllocationConfig,
    events: impl IntoIterator<Item = &'a LedgerEvent>,
) -> Result<LedgerState, LedgerError> {
    let mut state = LedgerState::genesis(config);
    for ev in events {
        state.apply(ev)?;
    }
    Ok(state)
}

/// Like [`replay`], calling `observe(before, event, after, applied)` around
/// every event.
pub fn replay_with<'a>(
    config: AllocationConfig,
    events: impl IntoIterator<Item = &'a LedgerEvent>,
    mut observe: impl FnMut(&LedgerState, &LedgerEvent, &LedgerState, &Applied),
) -> Result<LedgerState, LedgerError> {
    let mut state = LedgerState::genesis(config);
    for ev in events {
        let before = state.clone();
        let applied = state.apply(ev)?;
        observe(&before, ev, &state, &applied);
    }
    Ok(state)
}

/// Single-writer front end: assigns sequence numbers, checks blob
/// references against the store, applies and appends.
pub struct Ledger {
    state: LedgerState,
    events: Vec<LedgerEvent>,
    store: Arc<dyn BlobStore>,
}

impl Ledger {
    pub fn new(config: AllocationConfig, store: Arc<dyn BlobStore>) -> Self {
        Ledger {
            state: LedgerState::genesis(config),
            events: Vec::new(),
            store,
        }
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn store(&self) -> &Arc<dyn BlobStore> {
        &self.store
    }

    pub fn header(&self) -> LogHeader {
        LogHeader::new(self.state.config.clone())
    }

    /// Appends a call. Returns `Err` only when the call was refused before
    /// admission (unknown content id); rejections by the contract logic come
    /// back as `Applied::Rejected` and are part of the log.
    pub fn submit(
        &mut self,
        actor: Address,
        timestamp: u64,
        call: Call,
    ) -> Result<Applied, LedgerError> {
        if let Some(cid) = call.referenced_cid() {
            if !self.store.contains(cid) {
                return Err(LedgerError::UnknownCid(*cid));
            }
        }
        let event = LedgerEvent {
            seq: self.state.last_seq + 1,
            timestamp,
            actor,
            call,
        };
        let applied = self.state.apply(&event)?;
        self.events.push(event);
        Ok(applied)
    }

    /// Allocates a training task by asking `oracle` live, then appends an
    /// `AllocateTask` event carrying the answers it gave.
    pub fn allocate_task(
        &mut self,
        actor: Address,
        timestamp: u64,
        task_id: &TaskId,
        oracle: &mut dyn AcceptanceOracle,
    ) -> Result<Applied, LedgerError> {
        let mut responses = BTreeMap::new();
        if let Some(record) = self.state.task(task_id) {
            let spec = &record.spec;
            if spec.status == TaskStatus::Pending && spec.kind == TaskType::Training {
                let pool = self.state.workers.workers_in_domain(spec.domain);
                if let Ok(filtered) = filter_candidates(spec, pool, &self.state.config) {
                    let mut recorder = |w: &WorkerId, t: &crate::model::TaskSpec| {
                        let r = oracle.respond(w, t);
                        responses.insert(w.clone(), r);
                        r
                    };
                    // a failing walk is reported by the real apply below
                    let _ = retraction_walk(
                        spec,
                        &filtered.eligible,
                        &mut recorder,
                        default_acceptance_window(spec),
                        &mut RecordingSink::default(),
                    );
                }
            }
        }
        // silent workers need not be logged; the scripted replay defaults to silence
        responses.retain(|_, r| *r != OfferResponse::Silent);
        self.submit(
            actor,
            timestamp,
            Call::AllocateTask {
                task_id: task_id.clone(),
                responses,
            },
        )
    }

    pub fn into_parts(self) -> (LedgerState, Vec<LedgerEvent>) {
        (self.state, self.events)
    }
}

#[cfg(test)]
mod tests;
