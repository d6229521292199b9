use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{CheckpointMode, MetricKind};
use crate::nn::ModelSpec;
use crate::strategy::{LocalBudget, StrategyConfig};

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Accuracy]
}

/// Everything a federated run needs except the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: StrategyConfig,
    pub model: ModelSpec,
    pub n_rounds: usize,
    pub local_budget: LocalBudget,
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Empty means every mode allowed for the strategy.
    #[serde(default)]
    pub checkpoint_modes: Vec<CheckpointMode>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub balance_train: bool,
}

impl ExperimentConfig {
    pub fn new(
        strategy: StrategyConfig,
        model: ModelSpec,
        n_rounds: usize,
        local_budget: LocalBudget,
        batch_size: usize,
    ) -> Self {
        Self {
            strategy,
            model,
            n_rounds,
            local_budget,
            batch_size,
            seeds: default_seeds(),
            checkpoint_modes: Vec::new(),
            metrics: default_metrics(),
            balance_train: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if self.n_rounds == 0 {
            return Err(Error::Config("n_rounds must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.local_budget.is_zero() {
            return Err(Error::Config("local_budget must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.strategy.kind.is_personalized() && self.checkpoint_modes.contains(&CheckpointMode::Global) {
            return Err(Error::Config(format!(
                "{} is personalized: its clients hold different models, so only local and latest checkpointing apply",
                self.strategy.kind
            )));
        }
        Ok(())
    }

    /// Requested checkpoint modes in canonical order, defaulted by strategy.
    pub fn modes(&self) -> Vec<CheckpointMode> {
        let personalized = self.strategy.kind.is_personalized();
        CheckpointMode::ALL
            .into_iter()
            .filter(|m| {
                if self.checkpoint_modes.is_empty() {
                    !(personalized && *m == CheckpointMode::Global)
                } else {
                    self.checkpoint_modes.contains(m)
                }
            })
            .collect()
    }
}
