use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::data::FederatedDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, CheckpointMode, CheckpointStore, MetricReport};
use crate::nn::Model;
use crate::par::Execution;
use crate::rng::SeedTree;
use crate::strategy::{client_update, ClientModel, ClientState, LocalBudget, ServerState, StrategyConfig};

/// Bytes per transmitted scalar.
pub const SCALAR_BYTES: usize = std::mem::size_of::<f64>();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundStats {
    pub client_id: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub n_val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub clients: Vec<ClientRoundStats>,
    pub aggregated_val_loss: f64,
    /// Total client-to-server payload, audited against the federated subset size.
    pub upload_bytes: usize,
}

/// `Σ n_val,i·loss_i / Σ n_val,i`.
pub fn aggregate_val_loss(losses: &[f64], n_val: &[usize]) -> Result<f64> {
    if losses.len() != n_val.len() {
        return Err(Error::dim("validation sizes", losses.len(), n_val.len()));
    }
    let total: usize = n_val.iter().sum();
    if total == 0 {
        return Err(Error::Data("no validation examples on any client".into()));
    }
    let weighted: f64 = losses.iter().zip(n_val).map(|(l, &n)| l * n as f64).sum();
    Ok(weighted / total as f64)
}

fn attribute(round: usize, client: usize, e: Error) -> Error {
    match e {
        Error::Diverged { .. } | Error::Client { .. } => e,
        e => Error::Client {
            round,
            client,
            source: Box::new(e),
        },
    }
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// One round: broadcast, local updates, aggregation, re-broadcast and
/// post-aggregation validation on every client.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    strategy: &StrategyConfig,
    budget: LocalBudget,
    exec: Execution,
) -> Result<RoundRecord> {
    let kind = strategy.kind;
    let msg = server.message(kind);
    let round = msg.round;
    let updates = first_error(exec.map_mut(clients, |_, c| {
        client_update(strategy, c, &msg, budget).map_err(|e| attribute(round, c.client_id, e))
    }))?;

    let expected = server.global_params.len();
    for u in &updates {
        if u.payload.len() != expected {
            return Err(attribute(
                round,
                u.client_id,
                Error::dim("client payload", expected, u.payload.len()),
            ));
        }
    }
    let upload_bytes = updates.iter().map(|u| u.payload.len() * SCALAR_BYTES).sum();
    server.aggregate(strategy, &updates)?;

    let result = server.message(kind);
    let val = first_error(exec.map_mut(clients, |_, c| {
        c.receive(kind, &result).map_err(|e| attribute(round, c.client_id, e))?;
        let v = c.validation_loss().map_err(|e| attribute(round, c.client_id, e))?;
        if !v.is_finite() {
            return Err(Error::Diverged {
                round,
                client: c.client_id,
                detail: format!("validation loss is {v}"),
            });
        }
        Ok(v)
    }))?;

    let stats: Vec<ClientRoundStats> = clients
        .iter()
        .zip(&updates)
        .zip(&val)
        .map(|((c, u), &v)| ClientRoundStats {
            client_id: c.client_id,
            train_loss: u.train_loss,
            val_loss: v,
            n_val: c.n_val(),
        })
        .collect();
    let aggregated_val_loss = aggregate_val_loss(&val, &stats.iter().map(|s| s.n_val).collect::<Vec<_>>())?;
    Ok(RoundRecord {
        round,
        clients: stats,
        aggregated_val_loss,
        upload_bytes,
    })
}

/// Best-loss snapshots kept during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCheckpoints {
    pub latest: Option<CheckpointStore<Vec<Model>>>,
    pub global: Option<CheckpointStore<Model>>,
    pub local: Option<CheckpointStore<Model>>,
}

impl RunCheckpoints {
    fn new(modes: &[CheckpointMode], n_clients: usize) -> Self {
        Self {
            latest: modes
                .contains(&CheckpointMode::Latest)
                .then(|| CheckpointStore::new(CheckpointMode::Latest, 1)),
            global: modes
                .contains(&CheckpointMode::Global)
                .then(|| CheckpointStore::new(CheckpointMode::Global, 1)),
            local: modes
                .contains(&CheckpointMode::Local)
                .then(|| CheckpointStore::new(CheckpointMode::Local, n_clients)),
        }
    }

    fn record(&mut self, record: &RoundRecord, clients: &[ClientState]) {
        if let Some(s) = &mut self.latest {
            s.maybe_checkpoint(0, record.round, record.aggregated_val_loss, || {
                clients.iter().map(|c| c.model().eval_model()).collect()
            });
        }
        if let Some(s) = &mut self.global {
            // Non-personalized clients all hold the broadcast model.
            s.maybe_checkpoint(0, record.round, record.aggregated_val_loss, || {
                clients[0].model().eval_model()
            });
        }
        if let Some(s) = &mut self.local {
            for (c, st) in clients.iter().zip(&record.clients) {
                s.maybe_checkpoint(c.client_id, record.round, st.val_loss, || c.model().eval_model());
            }
        }
    }

    /// The model each client is evaluated with under `mode`.
    pub fn client_models(&self, mode: CheckpointMode, n_clients: usize) -> Option<Vec<&Model>> {
        match mode {
            CheckpointMode::Latest => self.latest.as_ref()?.get(0).map(|c| c.snapshot.iter().collect()),
            CheckpointMode::Global => {
                let m = &self.global.as_ref()?.get(0)?.snapshot;
                Some(vec![m; n_clients])
            }
            CheckpointMode::Local => self.local.as_ref()?.iter().map(|c| c.map(|c| &c.snapshot)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub history: Vec<RoundRecord>,
    pub checkpoints: RunCheckpoints,
    /// Test metrics per checkpoint mode, one report per requested metric.
    pub metrics: BTreeMap<CheckpointMode, Vec<MetricReport>>,
    /// Validation loss of each client's selected model, per mode.
    pub val_losses: BTreeMap<CheckpointMode, Vec<f64>>,
    pub val_indices: Vec<Vec<usize>>,
    pub diverged: bool,
    pub diagnostic: Option<String>,
}

impl RunResult {
    pub fn min_aggregated_val_loss(&self) -> f64 {
        if self.diverged {
            return f64::INFINITY;
        }
        self.history
            .iter()
            .map(|r| r.aggregated_val_loss)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_metric(&self, mode: CheckpointMode, kind: crate::eval::MetricKind) -> Option<f64> {
        self.metrics.get(&mode)?.iter().find(|r| r.kind == kind)?.mean
    }
}

/// Builds the clients and the server for one run.
pub fn init_federation(
    config: &ExperimentConfig,
    dataset: &FederatedDataset,
    tree: &SeedTree,
) -> Result<(ServerState, Vec<ClientState>)> {
    let dim = dataset
        .shared_dim()
        .ok_or_else(|| Error::Data("federated runs need the same feature dimension on every client".into()))?;
    let splits = dataset.split(*tree, config.balance_train)?;
    let template = ClientModel::init(&config.strategy, &config.model, dim, &mut tree.child("init").rng())?;
    let server = ServerState::new(template.federated_params(config.strategy.kind)?);
    let clients = splits
        .into_iter()
        .map(|s| {
            ClientState::new(
                &config.strategy,
                Arc::new(s),
                template.clone(),
                config.batch_size,
                *tree,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((server, clients))
}

/// Runs every round of one replicate and evaluates the requested checkpoints
/// on the clients' test splits. Divergence ends training early but still
/// returns the checkpoints gathered so far.
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &FederatedDataset,
    seed: u64,
    exec: Execution,
) -> Result<RunResult> {
    config.validate()?;
    let tree = SeedTree::new(seed);
    let (mut server, mut clients) = init_federation(config, dataset, &tree)?;
    let modes = config.modes();
    let mut checkpoints = RunCheckpoints::new(&modes, clients.len());
    let mut history = Vec::with_capacity(config.n_rounds);
    let mut diagnostic = None;

    for _ in 0..config.n_rounds {
        match run_round(&mut server, &mut clients, &config.strategy, config.local_budget, exec) {
            Ok(record) => {
                checkpoints.record(&record, &clients);
                history.push(record);
            }
            Err(e) if e.is_divergence() => {
                diagnostic = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let mut metrics = BTreeMap::new();
    let mut val_losses = BTreeMap::new();
    for &mode in &modes {
        if config.metrics.is_empty() {
            break;
        }
        let Some(models) = checkpoints.client_models(mode, clients.len()) else {
            continue;
        };
        let per_client = models
            .iter()
            .zip(&clients)
            .map(|(m, c)| evaluate_model(m, &c.data().test, &config.metrics))
            .collect::<Result<Vec<_>>>()?;
        let losses = models
            .iter()
            .zip(&clients)
            .map(|(m, c)| crate::eval::dataset_loss(m, &c.data().val))
            .collect::<Result<Vec<_>>>()?;
        let reports = config
            .metrics
            .iter()
            .enumerate()
            .map(|(j, &k)| MetricReport::new(k, per_client.iter().map(|v| v[j]).collect()))
            .collect();
        metrics.insert(mode, reports);
        val_losses.insert(mode, losses);
    }

    Ok(RunResult {
        seed,
        history,
        checkpoints,
        metrics,
        val_losses,
        val_indices: clients.iter().map(|c| c.data().val_indices.clone()).collect(),
        diverged: diagnostic.is_some(),
        diagnostic,
    })
}

/// One independent run per configured seed, in seed order.
pub fn run_replicates(
    config: &ExperimentConfig,
    dataset: &FederatedDataset,
    exec: Execution,
) -> Vec<Result<RunResult>> {
    exec.map(&config.seeds, |_, &seed| run_experiment(config, dataset, seed, exec))
}
