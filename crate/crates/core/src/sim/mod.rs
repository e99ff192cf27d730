//! Synthetic workloads and experiment runners.
//!
//! [`generate_population`] draws workers whose prior counters follow hidden
//! [`LatentBehavior`] propensities. [`run_lifecycle`] pushes a task stream
//! through a [`Ledger`](crate::ledger::Ledger), letting the same propensities
//! answer offers, deliver outcomes and earn ratings. The benchmark runners
//! compare greedy recruitment with the metaheuristics and the
//! single-criterion baselines on one fixed population.

mod bench;
mod lifecycle;
mod population;

use thiserror::Error;

use crate::allocation::AllocationError;
use crate::ledger::LedgerError;
use crate::metaheuristics::OptimizerError;
use crate::store::StoreError;

pub use bench::{
    read_rows_csv, run_baseline_benchmark, run_optimizer_benchmark, summarize, write_rows_csv,
    BenchResults, BenchRow, BenchSummary, BenchTask, BenchmarkSpec,
};
pub use lifecycle::{
    generate_task_stream, run_lifecycle, LifecycleConfig, LifecycleRun, ScheduledTask, TaskStream,
    TaskStreamSpec, TickMetrics, WorkerTrace,
};
pub use population::{generate_population, LatentBehavior, Population, PopulationSpec, Span};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Ledger(#[from] LedgerError),

    #[error(transparent)]
    Allocation(#[from] AllocationError),

    #[error(transparent)]
    Optimizer(#[from] OptimizerError),

    #[error(transparent)]
    Store(#[from] StoreError),
}
