//! The round-based federated protocol and replicate execution.

mod config;
mod run;

pub use config::ExperimentConfig;
pub use run::{
    aggregate_val_loss, init_federation, run_experiment, run_replicates, run_round, ClientRoundStats, RoundRecord,
    RunCheckpoints, RunResult, SCALAR_BYTES,
};
