//! Deterministic cross-silo federated learning simulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense networks with exact backpropagation, BCE loss, SGD/AdamW,
//!   parameter flattening with role partitions, and the FENDA composite model.
//! - [`strategy`]: client update and server aggregation rules for FedAvg,
//!   FedAdam, FedProx, SCAFFOLD, MOON, FedPer, Ditto, APFL, PerFCL and FENDA-FL.
//! - [`fl`]: the round protocol and multi-seed experiment execution.
//! - [`eval`]: checkpoint stores, metrics, baselines, run statistics and ranking.
//! - [`data`]: CSV ingestion, splits, class balancing and synthetic non-IID data.
//!
//! Every source of randomness derives from a run seed through named streams
//! (see [`rng`]), so results never depend on thread scheduling.

pub mod data;
pub mod error;
pub mod eval;
pub mod fl;
pub mod nn;
pub mod par;
pub mod rng;
pub mod strategy;

pub use error::{Error, Result};
