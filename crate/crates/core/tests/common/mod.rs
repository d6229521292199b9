#![allow(dead_code)]

use fedbench_core::data::{generate_synthetic_federated, FederatedDataset, SyntheticSpec};
use fedbench_core::fl::ExperimentConfig;
use fedbench_core::nn::ModelSpec;
use fedbench_core::strategy::{LocalBudget, StrategyConfig, StrategyKind};

/// Four heterogeneous clients, 10 features, ~80 rows each.
pub fn small_task() -> FederatedDataset {
    let mut spec = SyntheticSpec::iid(4, 80, 6);
    spec.label_shift = 0.4;
    spec.covariate_shift = 0.5;
    spec.concept_shift = 0.5;
    spec.noise = 0.2;
    spec.separation = 2.0;
    spec.n_test_per_client = Some(60);
    generate_synthetic_federated(&spec, 3).unwrap()
}

pub fn model_for(kind: StrategyKind) -> ModelSpec {
    if kind.uses_fenda() {
        ModelSpec::Fenda {
            global: vec![4],
            local: vec![4],
            head_hidden: vec![],
        }
    } else {
        ModelSpec::Mlp { hidden: vec![6] }
    }
}

pub fn config(strategy: StrategyConfig, rounds: usize, steps: usize) -> ExperimentConfig {
    let model = model_for(strategy.kind);
    let mut c = ExperimentConfig::new(strategy, model, rounds, LocalBudget::Steps(steps), 8);
    c.seeds = vec![11];
    c
}

pub fn strategy(kind: StrategyKind) -> StrategyConfig {
    let lr = if kind == StrategyKind::Scaffold { 0.05 } else { 0.01 };
    StrategyConfig::new(kind, lr)
}
