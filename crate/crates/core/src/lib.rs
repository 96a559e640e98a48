//! Batch Thompson Sampling for stochastic and linear contextual bandits.
//!
//! Policies query rewards in batches whose boundaries follow a per-arm
//! doubling rule, so a run over `T` rounds with `N` arms performs at most
//! `N (floor(log2 T) + 1)` batch queries. The crate provides the samplers,
//! the batch scheduler, multi-armed and contextual policies with their
//! fully sequential counterparts, synthetic and dataset-backed environments,
//! and a replicated-run harness with CSV output.

pub mod bandit;
pub mod contextual;
pub mod engine;
pub mod env;
pub mod error;
pub mod harness;
pub mod policy;
pub mod sampling;
pub mod sequential;

pub use bandit::{
    doubling_batch_bound, pseudo_regret_step, static_flush_rule, ArmStats, BatchState,
    CommittedView, FlushDecision, InvariantMonitor, PendingBatch, RunRecord, Schedule,
};
pub use contextual::{v_parameter, ContextualPolicy, LinearPosterior};
pub use engine::{run_contextual, run_mab, RunStreams};
pub use env::{ContextSet, Environment, EnvironmentSpec, MeanSpec, PreparedEnvironment};
pub use error::{Error, Result};
pub use harness::{
    aggregate, execute, run_experiment, run_policy, ContextualVariant, ExperimentConfig, Mode,
    PolicyConfig, SummaryRow,
};
pub use policy::{IndexRule, MabPolicy, MabPolicyConfig, MabVariant, StaticBatches};
pub use sampling::RandomStream;
pub use sequential::{run_contextual_sequential, run_mab_sequential};
