//! In-memory worker registry mirroring the users contract's
//! "Workers List" and "Domain Workers" mappings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    DomainCode, ModelError, Outcome, TaskType, WorkerId, WorkerProfile, WorkerStatus,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerRegistry {
    workers: BTreeMap<WorkerId, WorkerProfile>,
    /// Registration order per domain.
    domain_workers: BTreeMap<DomainCode, Vec<WorkerId>>,
}

impl WorkerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn contains(&self, id: &WorkerId) -> bool {
        self.workers.contains_key(id)
    }

    pub fn get(&self, id: &WorkerId) -> Option<&WorkerProfile> {
        self.workers.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &WorkerProfile> {
        self.workers.values()
    }

    /// Stores a new profile. Missing counter cells are zero-filled and the
    /// worker starts `Idle` until it announces availability.
    pub fn register_worker(&mut self, mut profile: WorkerProfile) -> Result<(), ModelError> {
        if self.workers.contains_key(&profile.worker_id) {
            return Err(ModelError::DuplicateId(profile.worker_id));
        }
        profile.validate()?;
        profile.fill_missing_cells();
        profile.status = WorkerStatus::Idle;
        for &domain in &profile.domains {
            self.domain_workers
                .entry(domain)
                .or_default()
                .push(profile.worker_id.clone());
        }
        self.workers.insert(profile.worker_id.clone(), profile);
        Ok(())
    }

    pub fn set_status(&mut self, id: &WorkerId, status: WorkerStatus) -> Result<(), ModelError> {
        let worker = self
            .workers
            .get_mut(id)
            .ok_or_else(|| ModelError::UnknownWorker(id.clone()))?;
        worker.status = status;
        Ok(())
    }

    pub fn record_outcome(
        &mut self,
        id: &WorkerId,
        domain: DomainCode,
        kind: TaskType,
        outcome: Outcome,
    ) -> Result<(), ModelError> {
        let worker = self
            .workers
            .get_mut(id)
            .ok_or_else(|| ModelError::UnknownWorker(id.clone()))?;
        if !worker.covers(domain) {
            return Err(ModelError::DomainNotCovered {
                worker: id.clone(),
                domain,
            });
        }
        worker
            .stats
            .entry((domain, kind))
            .or_default()
            .apply(outcome)
    }

    /// Workers covering `domain`, in registration order.
    pub fn workers_in_domain(&self, domain: DomainCode) -> Vec<&WorkerProfile> {
        self.domain_workers
            .get(&domain)
            .map(|ids| ids.iter().filter_map(|id| self.workers.get(id)).collect())
            .unwrap_or_default()
    }
}
