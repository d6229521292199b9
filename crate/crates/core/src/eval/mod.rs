//! Checkpoint selection, metrics, run statistics, ranking and baselines.

mod baselines;
mod checkpoint;
mod metrics;
mod rank;
mod stats;

pub use baselines::{
    baseline_central, baseline_local_crossclient, baseline_siloed, dataset_loss, evaluate_model, run_baselines,
    train_with_validation, BaselineResults, TrainConfig, TrainedModel,
};
pub use checkpoint::{Checkpoint, CheckpointMode, CheckpointStore};
pub use metrics::{
    accuracy, auc_roc, balanced_accuracy, evaluate_metric, MetricKind, MetricReport, DECISION_THRESHOLD,
};
pub use rank::{best_over_modes, rank_methods, RankTable, TieRule};
pub use stats::{multi_run_stats, RunStatistics, Z_95};
