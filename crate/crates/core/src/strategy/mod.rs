//! Federated strategies as client update and server aggregation rules.

mod aggregate;
mod apfl;
mod client;
mod config;
pub mod contrastive;
mod drift;

pub use aggregate::{
    server_aggregate_fedadam, server_aggregate_fedavg, server_aggregate_scaffold, ServerMessage, ServerState,
};
pub use apfl::apfl_alpha_update;
pub use client::{client_update, federated_payload, BatchLoader, ClientModel, ClientState, ClientUpdate, LocalBudget};
pub use config::{StrategyConfig, StrategyKind};
pub use drift::{fedadam_drift, fedadam_drift_demo, DriftSettings};
