//! Worker recruitment and model allocation for a crowdsourced deep
//! reinforcement learning marketplace.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the plain data types shared by everything else.
//! * [`registry`] keeps worker profiles and their per-domain counters.
//! * [`scoring`] turns counters and hardware into QoS scores and checks
//!   recruitment constraints.
//! * [`allocation`] filters, ranks and selects workers or models.
//! * [`metaheuristics`] holds the GA, PSO and ACO comparators and the
//!   single-criterion baselines.
//! * [`ledger`] is the event-sourced contract state machine.
//! * [`store`] is the content-addressed blob store.
//! * [`sim`] generates synthetic populations and drives experiments.

pub mod allocation;
pub mod ledger;
pub mod metaheuristics;
pub mod model;
pub mod registry;
pub mod scoring;
pub mod sim;
pub mod store;

pub use allocation::{AllocationConfig, AllocationError, Eligible, Method, SelectionReport};
pub use ledger::{Call, Ledger, LedgerError, LedgerEvent, LedgerState};
pub use model::{
    Address, ComputeProfile, DomainCode, EnvFeatureVector, ModelError, ModelRecord, Outcome,
    PerfCounters, RequesterId, TaskId, TaskSpec, TaskStatus, TaskType, WorkerId, WorkerProfile,
    WorkerStatus,
};
pub use registry::WorkerRegistry;
pub use scoring::{ScoreBreakdown, ScoringConfig, ScoringError, SimilarityWeights};
pub use store::{BlobStore, ContentId, FsStore, MemStore, StoreError};
