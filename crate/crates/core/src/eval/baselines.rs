//! Non-federated reference points: siloed, cross-client local and central.

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_metric, MetricKind, MetricReport};
use crate::data::{ClientSplit, FederatedDataset, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::{bce_loss, Model, ModelSpec, OptimizerState, Parameterized};
use crate::par::Execution;
use crate::rng::SeedTree;
use crate::strategy::BatchLoader;

/// Epoch-based training with validation-loss checkpointing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub balance_train: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub best_val_loss: f64,
    /// 1-based epoch of the kept model.
    pub best_epoch: usize,
}

pub fn dataset_loss(model: &Model, data: &TabularDataset) -> Result<f64> {
    Ok(bce_loss(&model.predict(data.features())?, &data.targets(), None)?.0)
}

/// Trains one model on `train`, keeping the epoch with the lowest `val` loss.
/// `owner` picks the batch-order stream and labels divergence errors.
pub fn train_with_validation(
    cfg: &TrainConfig,
    train: &TabularDataset,
    val: &TabularDataset,
    tree: &SeedTree,
    owner: usize,
) -> Result<TrainedModel> {
    let mut model = cfg.model.build(train.dim(), &mut tree.child("init").rng())?;
    let mut opt = OptimizerState::adamw(cfg.lr, model.param_count())?;
    let mut loader = BatchLoader::new(train.len(), cfg.batch_size, tree.child("batches").stream(owner))?;
    let targets = train.targets();
    let steps = train.len().div_ceil(cfg.batch_size);
    let mut best: Option<TrainedModel> = None;
    for epoch in 1..=cfg.epochs {
        loader.start_epoch();
        for _ in 0..steps {
            let idx = loader.next_batch().to_vec();
            let x = train.features().select_rows(&idx);
            let y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let (pred, cache) = model.forward(&x)?;
            let (loss, d) = bce_loss(&pred, &y, None)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    round: epoch,
                    client: owner,
                    detail: format!("training loss is {loss}"),
                });
            }
            let g = model.backward(&cache, &d)?;
            let mut flat = model.flatten();
            opt.step(&mut flat, &g)?;
            model.load(&flat)?;
        }
        let v = dataset_loss(&model, val)?;
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.best_val_loss) {
            best = Some(TrainedModel {
                model: model.clone(),
                best_val_loss: v,
                best_epoch: epoch,
            });
        }
    }
    best.ok_or_else(|| Error::Diverged {
        round: cfg.epochs,
        client: owner,
        detail: "validation loss never finite".into(),
    })
}

/// Metric values of `model` on `data`; unavailable metrics are `None`.
pub fn evaluate_model(model: &Model, data: &TabularDataset, kinds: &[MetricKind]) -> Result<Vec<Option<f64>>> {
    let scores = model.predict(data.features())?.into_vec();
    kinds
        .iter()
        .map(|&k| match evaluate_metric(&scores, data.labels(), k) {
            Ok(v) => Ok(Some(v)),
            Err(Error::MetricUnavailable(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn reports(kinds: &[MetricKind], per_client: Vec<Vec<Option<f64>>>) -> Vec<MetricReport> {
    kinds
        .iter()
        .enumerate()
        .map(|(j, &k)| MetricReport::new(k, per_client.iter().map(|c| c[j]).collect()))
        .collect()
}

fn attribute(client: usize, e: Error) -> Error {
    if matches!(e, Error::Diverged { .. } | Error::Client { .. }) {
        e
    } else {
        Error::Client {
            round: 0,
            client,
            source: Box::new(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResults {
    /// Each client trains and tests on its own data.
    pub siloed: Vec<MetricReport>,
    /// One model trained on the pooled training splits.
    pub central: Vec<MetricReport>,
    /// `cross_client[k]`: the model trained on client `k`, tested on every client.
    pub cross_client: Vec<Vec<MetricReport>>,
}

fn check_dims(dataset: &FederatedDataset) -> Result<usize> {
    dataset
        .shared_dim()
        .ok_or_else(|| Error::Data("baselines need the same feature dimension on every client".into()))
}

fn train_silos(
    splits: &[ClientSplit],
    cfg: &TrainConfig,
    tree: &SeedTree,
    exec: Execution,
) -> Result<Vec<TrainedModel>> {
    exec.map(splits, |_, s| {
        train_with_validation(cfg, &s.train, &s.val, tree, s.client_id).map_err(|e| attribute(s.client_id, e))
    })
    .into_iter()
    .collect()
}

pub fn baseline_siloed(
    dataset: &FederatedDataset,
    cfg: &TrainConfig,
    kinds: &[MetricKind],
    seed: u64,
    exec: Execution,
) -> Result<Vec<MetricReport>> {
    cfg.validate()?;
    let tree = SeedTree::new(seed);
    let splits = dataset.split(tree, cfg.balance_train)?;
    let silos = train_silos(&splits, cfg, &tree, exec)?;
    let per_client = silos
        .iter()
        .zip(&splits)
        .map(|(m, s)| evaluate_model(&m.model, &s.test, kinds))
        .collect::<Result<_>>()?;
    Ok(reports(kinds, per_client))
}

pub fn baseline_local_crossclient(
    dataset: &FederatedDataset,
    cfg: &TrainConfig,
    kinds: &[MetricKind],
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<MetricReport>>> {
    Ok(run_baselines(dataset, cfg, kinds, seed, exec)?.cross_client)
}

pub fn baseline_central(
    dataset: &FederatedDataset,
    cfg: &TrainConfig,
    kinds: &[MetricKind],
    seed: u64,
) -> Result<Vec<MetricReport>> {
    cfg.validate()?;
    check_dims(dataset)?;
    let tree = SeedTree::new(seed);
    let splits = dataset.split(tree, cfg.balance_train)?;
    central_from_splits(&splits, cfg, kinds, &tree)
}

fn central_from_splits(
    splits: &[ClientSplit],
    cfg: &TrainConfig,
    kinds: &[MetricKind],
    tree: &SeedTree,
) -> Result<Vec<MetricReport>> {
    let mut train = splits[0].train.clone();
    let mut val = splits[0].val.clone();
    for s in &splits[1..] {
        train = train.concat(&s.train)?;
        val = val.concat(&s.val)?;
    }
    // Owner 0 shares client 0's batch stream, so one client reduces to siloed.
    let model = train_with_validation(cfg, &train, &val, tree, 0)?;
    let per_client = splits
        .iter()
        .map(|s| evaluate_model(&model.model, &s.test, kinds))
        .collect::<Result<_>>()?;
    Ok(reports(kinds, per_client))
}

/// All three baselines from one set of splits; the siloed values are the
/// diagonal of the cross-client matrix.
pub fn run_baselines(
    dataset: &FederatedDataset,
    cfg: &TrainConfig,
    kinds: &[MetricKind],
    seed: u64,
    exec: Execution,
) -> Result<BaselineResults> {
    cfg.validate()?;
    check_dims(dataset)?;
    let tree = SeedTree::new(seed);
    let splits = dataset.split(tree, cfg.balance_train)?;
    let silos = train_silos(&splits, cfg, &tree, exec)?;
    let matrix: Vec<Vec<Vec<Option<f64>>>> = exec
        .map(&silos, |_, m| {
            splits
                .iter()
                .map(|s| evaluate_model(&m.model, &s.test, kinds))
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let siloed = reports(
        kinds,
        matrix.iter().enumerate().map(|(k, row)| row[k].clone()).collect(),
    );
    let cross_client = matrix.into_iter().map(|row| reports(kinds, row)).collect();
    let central = central_from_splits(&splits, cfg, kinds, &tree)?;
    Ok(BaselineResults {
        siloed,
        central,
        cross_client,
    })
}
