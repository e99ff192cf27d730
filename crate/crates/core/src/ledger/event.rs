use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocation::OfferResponse;
use crate::model::{
    Address, DomainCode, ModelRecord, Outcome, RequesterId, TaskId, TaskSpec, TaskStatus, TaskType,
    WorkerId, WorkerProfile, WorkerStatus,
};
use crate::store::ContentId;

/// Contract function names, used as keys of the cost table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    AddWorker,
    AddRequester,
    UpdateStatus,
    UpdateInfo,
    AddTask,
    AllocateTask,
    UpdateTaskStatus,
    SubmitOutcome,
    AddModel,
    AllocateModel,
    SubmitFeedback,
    Pay,
}

impl CallKind {
    pub const ALL: [CallKind; 12] = [
        CallKind::AddWorker,
        CallKind::AddRequester,
        CallKind::UpdateStatus,
        CallKind::UpdateInfo,
        CallKind::AddTask,
        CallKind::AllocateTask,
        CallKind::UpdateTaskStatus,
        CallKind::SubmitOutcome,
        CallKind::AddModel,
        CallKind::AllocateModel,
        CallKind::SubmitFeedback,
        CallKind::Pay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CallKind::AddWorker => "add_worker",
            CallKind::AddRequester => "add_requester",
            CallKind::UpdateStatus => "update_status",
            CallKind::UpdateInfo => "update_info",
            CallKind::AddTask => "add_task",
            CallKind::AllocateTask => "allocate_task",
            CallKind::UpdateTaskStatus => "update_task_status",
            CallKind::SubmitOutcome => "submit_outcome",
            CallKind::AddModel => "add_model",
            CallKind::AllocateModel => "allocate_model",
            CallKind::SubmitFeedback => "submit_feedback",
            CallKind::Pay => "pay",
        }
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A contract call together with its arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "call", content = "payload", rename_all = "snake_case")]
pub enum Call {
    AddWorker {
        profile: WorkerProfile,
    },
    AddRequester {
        requester_id: RequesterId,
    },
    UpdateStatus {
        worker_id: WorkerId,
        status: WorkerStatus,
    },
    UpdateInfo {
        worker_id: WorkerId,
        domain: DomainCode,
        kind: TaskType,
        outcome: Outcome,
    },
    AddTask {
        task: TaskSpec,
    },
    /// Recruits workers for a training task. `responses` records how each
    /// offered worker answered, so the allocation replays exactly.
    AllocateTask {
        task_id: TaskId,
        responses: BTreeMap<WorkerId, OfferResponse>,
    },
    UpdateTaskStatus {
        task_id: TaskId,
        status: TaskStatus,
    },
    SubmitOutcome {
        task_id: TaskId,
        worker_id: WorkerId,
        cid: ContentId,
    },
    AddModel {
        model: ModelRecord,
    },
    AllocateModel {
        task_id: TaskId,
    },
    SubmitFeedback {
        task_id: TaskId,
        worker_id: WorkerId,
        rating_points: u32,
    },
    Pay {
        task_id: TaskId,
        worker_id: WorkerId,
        amount: u64,
    },
}

impl Call {
    pub fn kind(&self) -> CallKind {
        match self {
            Call::AddWorker { .. } => CallKind::AddWorker,
            Call::AddRequester { .. } => CallKind::AddRequester,
            Call::UpdateStatus { .. } => CallKind::UpdateStatus,
            Call::UpdateInfo { .. } => CallKind::UpdateInfo,
            Call::AddTask { .. } => CallKind::AddTask,
            Call::AllocateTask { .. } => CallKind::AllocateTask,
            Call::UpdateTaskStatus { .. } => CallKind::UpdateTaskStatus,
            Call::SubmitOutcome { .. } => CallKind::SubmitOutcome,
            Call::AddModel { .. } => CallKind::AddModel,
            Call::AllocateModel { .. } => CallKind::AllocateModel,
            Call::SubmitFeedback { .. } => CallKind::SubmitFeedback,
            Call::Pay { .. } => CallKind::Pay,
        }
    }

    /// Content ids the call references; they must exist in the blob store
    /// before the call is admitted.
    pub fn referenced_cid(&self) -> Option<&ContentId> {
        match self {
            Call::SubmitOutcome { cid, .. } => Some(cid),
            Call::AddModel { model } => Some(&model.cid),
            _ => None,
        }
    }
}

/// One appended state transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    /// Logical tick supplied by the caller.
    pub timestamp: u64,
    pub actor: Address,
    #[serde(flatten)]
    pub call: Call,
}

impl LedgerEvent {
    /// Canonical JSON encoding: struct field order, no whitespace.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("ledger events always serialize")
    }
}
