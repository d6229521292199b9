//! Client-side state and the per-strategy local update rules.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::aggregate::ServerMessage;
use super::apfl::apfl_alpha_update;
use super::config::{StrategyConfig, StrategyKind};
use super::contrastive::{moon_term, perfcl_terms, PerFclAnchors};
use crate::data::{ClientSplit, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::{
    bce_loss, FeatureGrads, Matrix, Model, ModelSpec, OptimizerState, ParameterVector, Parameterized, Role,
    SequentialModel, TwinModel,
};
use crate::rng::{SeedTree, StreamRng};

/// How much local training a client does per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalBudget {
    /// Mini-batch steps drawn from a loader that keeps its position across rounds.
    Steps(usize),
    /// Full passes over the training split, reshuffled every epoch.
    Epochs(usize),
}

impl LocalBudget {
    pub fn steps_for(self, n_train: usize, batch_size: usize) -> usize {
        match self {
            LocalBudget::Steps(k) => k,
            LocalBudget::Epochs(e) => e * n_train.div_ceil(batch_size),
        }
    }

    pub fn is_zero(self) -> bool {
        matches!(self, LocalBudget::Steps(0) | LocalBudget::Epochs(0))
    }
}

/// Shuffled mini-batch cursor over `0..n`. Batches never straddle a pass;
/// the final batch of a pass may be short.
#[derive(Debug, Clone)]
pub struct BatchLoader {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: StreamRng,
}

impl BatchLoader {
    pub fn new(n: usize, batch_size: usize, mut rng: StreamRng) -> Result<Self> {
        if n == 0 {
            return Err(Error::Data("empty training split".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            order,
            cursor: 0,
            batch_size,
            rng,
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        let end = (start + self.batch_size).min(self.order.len());
        self.cursor = end;
        &self.order[start..end]
    }

    /// Discards the rest of a partially consumed pass.
    pub fn start_epoch(&mut self) {
        if self.cursor != 0 {
            self.cursor = self.order.len();
        }
    }
}

/// The model(s) a client trains, by strategy family.
#[derive(Debug, Clone)]
pub enum ClientModel {
    Single {
        model: Model,
        optimizer: OptimizerState,
    },
    Ditto {
        global: Model,
        personal: Model,
        global_optimizer: OptimizerState,
        personal_optimizer: OptimizerState,
    },
    Apfl {
        twins: TwinModel,
        alpha: f64,
        global_optimizer: OptimizerState,
        personal_optimizer: OptimizerState,
    },
}

fn check_spec(kind: StrategyKind, spec: &ModelSpec) -> Result<()> {
    match (kind.uses_fenda(), spec) {
        (true, ModelSpec::Fenda { global, local, .. }) => {
            if kind == StrategyKind::PerFcl && global.last() != local.last() {
                return Err(Error::Config(
                    "perfcl compares global and local features, so both extractors need the same output width".into(),
                ));
            }
            Ok(())
        }
        (true, _) => Err(Error::Config(format!("strategy {kind} needs a fenda model spec"))),
        (false, ModelSpec::Fenda { .. }) => {
            Err(Error::Config(format!("strategy {kind} needs a sequential model spec")))
        }
        (false, ModelSpec::Logistic) if kind == StrategyKind::FedPer => Err(Error::Config(
            "fedper needs a feature extractor; use an mlp with at least one hidden layer".into(),
        )),
        _ => Ok(()),
    }
}

impl ClientModel {
    /// Builds the strategy's client model from an initialisation stream.
    /// Every client built from the same stream starts identical.
    pub fn init(strategy: &StrategyConfig, spec: &ModelSpec, input_dim: usize, rng: &mut StreamRng) -> Result<Self> {
        let kind = strategy.kind;
        check_spec(kind, spec)?;
        let lr = strategy.client_lr;
        Ok(match kind {
            StrategyKind::Ditto => {
                let global = spec.build(input_dim, rng)?;
                let n = global.param_count();
                ClientModel::Ditto {
                    personal: global.clone(),
                    global,
                    global_optimizer: OptimizerState::adamw(lr, n)?,
                    personal_optimizer: OptimizerState::adamw(lr, n)?,
                }
            }
            StrategyKind::Apfl => {
                let twins = spec.build_twins(input_dim, rng)?;
                let n = twins.global.param_count();
                ClientModel::Apfl {
                    twins,
                    alpha: strategy.alpha_init(),
                    global_optimizer: OptimizerState::adamw(lr, n)?,
                    personal_optimizer: OptimizerState::adamw(lr, n)?,
                }
            }
            _ => {
                let model = spec.build(input_dim, rng)?;
                let optimizer = if kind == StrategyKind::Scaffold {
                    OptimizerState::sgd(lr)?
                } else {
                    OptimizerState::adamw(lr, model.param_count())?
                };
                ClientModel::Single { model, optimizer }
            }
        })
    }

    /// The model used for validation and test predictions.
    pub fn eval_model(&self) -> Model {
        match self {
            ClientModel::Single { model, .. } => model.clone(),
            ClientModel::Ditto { personal, .. } => personal.clone(),
            ClientModel::Apfl { twins, alpha, .. } => Model::Sequential(twins.mixed(*alpha)),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            ClientModel::Single { model, .. } => model.predict(x),
            ClientModel::Ditto { personal, .. } => personal.predict(x),
            ClientModel::Apfl { twins, alpha, .. } => twins.mixed(*alpha).predict(x),
        }
    }

    /// All trainable client parameters, with role tags.
    pub fn all_params(&self) -> ParameterVector {
        match self {
            ClientModel::Single { model, .. } => model.flatten(),
            ClientModel::Ditto { global, personal, .. } => {
                let g = global.flatten();
                let p = personal.flatten();
                let mut values = g.values().to_vec();
                values.extend_from_slice(p.values());
                let mut roles = vec![Role::Global; g.len()];
                roles.extend(std::iter::repeat_n(Role::Local, p.len()));
                ParameterVector::new(values, roles).expect("lengths agree")
            }
            ClientModel::Apfl { twins, .. } => twins.flatten(),
        }
    }

    pub fn federated_params(&self, kind: StrategyKind) -> Result<ParameterVector> {
        match self {
            ClientModel::Single { model, .. } => federated_payload(kind, model),
            ClientModel::Ditto { global, .. } => Ok(global.flatten()),
            ClientModel::Apfl { twins, .. } => federated_payload(kind, twins),
        }
    }

    /// Loads the server's parameters into the federated slots only.
    pub fn receive(&mut self, kind: StrategyKind, params: &ParameterVector) -> Result<()> {
        let roles = kind.federated_roles();
        match self {
            ClientModel::Single { model, .. } => {
                let mut flat = model.flatten();
                flat.scatter(roles, params.values())?;
                model.load(&flat)
            }
            ClientModel::Ditto { global, .. } => global.load_values(params.values()),
            ClientModel::Apfl { twins, .. } => {
                let mut flat = twins.flatten();
                flat.scatter(roles, params.values())?;
                twins.load(&flat)
            }
        }
    }
}

/// The parameter subset a strategy sends to the server.
pub fn federated_payload<P: Parameterized + ?Sized>(kind: StrategyKind, model: &P) -> Result<ParameterVector> {
    let flat = model.flatten();
    let local = flat.count_role(Role::Local);
    let ok = match kind {
        StrategyKind::Fenda | StrategyKind::PerFcl | StrategyKind::Apfl => local > 0,
        StrategyKind::FedPer => local == 0 && flat.count_role(Role::Global) > 0,
        _ => local == 0,
    };
    if !ok {
        return Err(Error::Config(format!("model layout does not fit strategy {kind}")));
    }
    Ok(flat.subset(kind.federated_roles()))
}

/// What a client sends back after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub payload: ParameterVector,
    pub n_train: usize,
    /// Mean data loss over the local steps of the evaluated model.
    pub train_loss: f64,
    pub scaffold_c_delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    data: Arc<ClientSplit>,
    train_targets: Vec<f64>,
    model: ClientModel,
    loader: BatchLoader,
    personal_loader: Option<BatchLoader>,
    scaffold_c: Option<Vec<f64>>,
    previous: Option<Model>,
}

impl ClientState {
    /// `model` is the client's initial model; `tree` is the run's seed tree.
    pub fn new(
        strategy: &StrategyConfig,
        data: Arc<ClientSplit>,
        model: ClientModel,
        batch_size: usize,
        tree: SeedTree,
    ) -> Result<Self> {
        let id = data.client_id;
        let n = data.train.len();
        let loader = BatchLoader::new(n, batch_size, tree.child("batches").stream(id))?;
        let personal_loader = (strategy.kind == StrategyKind::Ditto)
            .then(|| BatchLoader::new(n, batch_size, tree.child("batches-personal").stream(id)))
            .transpose()?;
        let scaffold_c = (strategy.kind == StrategyKind::Scaffold)
            .then(|| vec![0.0; model.federated_params(strategy.kind).map(|p| p.len()).unwrap_or(0)]);
        Ok(Self {
            client_id: id,
            train_targets: data.train.targets(),
            data,
            model,
            loader,
            personal_loader,
            scaffold_c,
            previous: None,
        })
    }

    pub fn data(&self) -> &ClientSplit {
        &self.data
    }

    pub fn model(&self) -> &ClientModel {
        &self.model
    }

    pub fn n_train(&self) -> usize {
        self.data.train.len()
    }

    pub fn n_val(&self) -> usize {
        self.data.val.len()
    }

    pub fn alpha(&self) -> Option<f64> {
        match &self.model {
            ClientModel::Apfl { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// SCAFFOLD's client control variate `c_i`.
    pub fn control_variate(&self) -> Option<&[f64]> {
        self.scaffold_c.as_deref()
    }

    pub fn receive(&mut self, kind: StrategyKind, msg: &ServerMessage) -> Result<()> {
        self.model.receive(kind, &msg.params)
    }

    pub fn loss_on(&self, data: &TabularDataset) -> Result<f64> {
        let pred = self.model.predict(data.features())?;
        Ok(bce_loss(&pred, &data.targets(), None)?.0)
    }

    pub fn validation_loss(&self) -> Result<f64> {
        self.loss_on(&self.data.val)
    }

    fn batch(&self, idx: &[usize]) -> (Matrix, Vec<f64>) {
        let x = self.data.train.features().select_rows(idx);
        let y = idx.iter().map(|&i| self.train_targets[i]).collect();
        (x, y)
    }
}

fn diverged(msg: &ServerMessage, client: usize, what: &str, value: f64) -> Error {
    Error::Diverged {
        round: msg.round,
        client,
        detail: format!("{what} is {value}"),
    }
}

/// Gradient of the mean BCE data loss plus optional feature-level terms.
/// Returns `(data loss, extra loss, gradient)`.
fn data_gradient(
    model: &Model,
    x: &Matrix,
    y: &[f64],
    extra: impl FnOnce(&crate::nn::ForwardCache) -> Result<Option<(f64, FeatureGrads)>>,
) -> Result<(f64, f64, ParameterVector)> {
    let (pred, cache) = model.forward(x)?;
    let (loss, d) = bce_loss(&pred, y, None)?;
    let (extra_loss, fg) = extra(&cache)?.unwrap_or_default();
    let g = model.backward_with_features(&cache, &d, &fg)?;
    Ok((loss, extra_loss, g))
}

fn sequential_gradient(model: &SequentialModel, x: &Matrix, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (pred, cache) = model.forward(x)?;
    let (loss, d) = bce_loss(&pred, y, None)?;
    let (g, _) = model.backward_raw(&cache, &d, None)?;
    Ok((loss, g))
}

fn apply_step(model: &mut Model, optimizer: &mut OptimizerState, grads: &ParameterVector) -> Result<()> {
    let mut flat = model.flatten();
    optimizer.step(&mut flat, grads)?;
    model.load(&flat)
}

/// Runs the strategy's local update for one round and returns the payload.
///
/// The server message is loaded into the client's federated parameters first.
/// Client-owned state (personal models, alpha, control variates, previous
/// round snapshots) is updated in place.
pub fn client_update(
    strategy: &StrategyConfig,
    client: &mut ClientState,
    msg: &ServerMessage,
    budget: LocalBudget,
) -> Result<ClientUpdate> {
    let kind = strategy.kind;
    let id = client.client_id;
    client.receive(kind, msg)?;
    let n_train = client.n_train();
    if n_train == 0 {
        return Err(Error::Data(format!("client {id} has an empty training split")));
    }
    let steps = budget.steps_for(n_train, client.loader.batch_size);
    let epoch_len = match budget {
        LocalBudget::Epochs(_) => Some(n_train.div_ceil(client.loader.batch_size)),
        LocalBudget::Steps(_) => None,
    };
    let mut loss_sum = 0.0;

    let mut c_delta = None;
    match kind {
        StrategyKind::Ditto => {
            // FedAvg participant pass on the global model, then the personal pass.
            let mut personal_loss = 0.0;
            let anchor = msg.params.values().to_vec();
            let lambda = strategy.lambda();
            for s in 0..steps {
                if epoch_len.is_some_and(|e| s % e == 0) {
                    client.loader.start_epoch();
                }
                let idx = client.loader.next_batch().to_vec();
                let (x, y) = client.batch(&idx);
                let ClientModel::Ditto {
                    global,
                    global_optimizer,
                    ..
                } = &mut client.model
                else {
                    unreachable!("ditto clients hold ditto models")
                };
                let (loss, _, g) = data_gradient(global, &x, &y, |_| Ok(None))?;
                if !loss.is_finite() {
                    return Err(diverged(msg, id, "global-model loss", loss));
                }
                apply_step(global, global_optimizer, &g)?;
            }
            let loader = client.personal_loader.as_mut().expect("ditto has a personal loader");
            for s in 0..steps {
                if epoch_len.is_some_and(|e| s % e == 0) {
                    loader.start_epoch();
                }
                let idx = loader.next_batch().to_vec();
                let x = client.data.train.features().select_rows(&idx);
                let y: Vec<f64> = idx.iter().map(|&i| client.train_targets[i]).collect();
                let ClientModel::Ditto {
                    personal,
                    personal_optimizer,
                    ..
                } = &mut client.model
                else {
                    unreachable!()
                };
                let (loss, _, mut g) = data_gradient(personal, &x, &y, |_| Ok(None))?;
                if !loss.is_finite() {
                    return Err(diverged(msg, id, "personal-model loss", loss));
                }
                if lambda != 0.0 {
                    let w = personal.flatten();
                    for ((gi, wi), ai) in g.values_mut().iter_mut().zip(w.values()).zip(&anchor) {
                        *gi += lambda * (wi - ai);
                    }
                }
                apply_step(personal, personal_optimizer, &g)?;
                personal_loss += loss;
            }
            loss_sum = personal_loss;
        }
        StrategyKind::Apfl => {
            let alpha_lr = strategy.alpha_lr();
            for s in 0..steps {
                if epoch_len.is_some_and(|e| s % e == 0) {
                    client.loader.start_epoch();
                }
                let idx = client.loader.next_batch().to_vec();
                let (x, y) = client.batch(&idx);
                let ClientModel::Apfl {
                    twins,
                    alpha,
                    global_optimizer,
                    personal_optimizer,
                } = &mut client.model
                else {
                    unreachable!("apfl clients hold twin models")
                };
                let (global_loss, g_global) = sequential_gradient(&twins.global, &x, &y)?;
                let mixed = twins.mixed(*alpha);
                let (mixed_loss, g_mixed) = sequential_gradient(&mixed, &x, &y)?;
                if !global_loss.is_finite() || !mixed_loss.is_finite() {
                    return Err(diverged(msg, id, "apfl loss", global_loss + mixed_loss));
                }
                let old_global = twins.global.flatten();
                let old_personal = twins.personal.flatten();
                let mixed_grad = ParameterVector::uniform(g_mixed, Role::Local);
                let new_alpha = apfl_alpha_update(*alpha, &mixed_grad, &old_global, &old_personal, alpha_lr)?;

                let mut w = old_global.clone();
                global_optimizer.step(&mut w, &ParameterVector::uniform(g_global, Role::Global))?;
                twins.global.load(&w)?;
                let mut v = old_personal;
                let scaled: Vec<f64> = mixed_grad.values().iter().map(|g| *alpha * g).collect();
                personal_optimizer.step(&mut v, &ParameterVector::uniform(scaled, Role::Local))?;
                twins.personal.load(&v)?;
                *alpha = new_alpha;
                loss_sum += mixed_loss;
            }
        }
        _ => {
            let round_start = match &client.model {
                ClientModel::Single { model, .. } => model.clone(),
                _ => unreachable!("single-model strategy"),
            };
            let round_start_flat = round_start.flatten();
            let mu_prox = if kind == StrategyKind::FedProx {
                strategy.mu_prox()
            } else {
                0.0
            };
            let correction: Option<Vec<f64>> = if kind == StrategyKind::Scaffold {
                let c = msg
                    .control
                    .as_ref()
                    .ok_or_else(|| Error::Config("scaffold round without a server control variate".into()))?;
                let c_i = client.scaffold_c.as_ref().expect("scaffold client has c_i");
                if c.len() != c_i.len() {
                    return Err(Error::dim("server control variate", c_i.len(), c.len()));
                }
                Some(c.iter().zip(c_i).map(|(c, ci)| c - ci).collect())
            } else {
                None
            };
            let mu_moon = if kind == StrategyKind::Moon {
                strategy.mu_moon()
            } else {
                0.0
            };
            let (mu_pf, gamma_pf) = if kind == StrategyKind::PerFcl {
                (strategy.mu_perfcl(), strategy.gamma_perfcl())
            } else {
                (0.0, 0.0)
            };
            let temperature = strategy.temperature();
            let previous = client.previous.clone();

            for s in 0..steps {
                if epoch_len.is_some_and(|e| s % e == 0) {
                    client.loader.start_epoch();
                }
                let idx = client.loader.next_batch().to_vec();
                let (x, y) = client.batch(&idx);
                let ClientModel::Single { model, optimizer } = &mut client.model else {
                    unreachable!()
                };
                let (loss, extra_loss, mut g) = data_gradient(model, &x, &y, |cache| {
                    let Some(prev) = previous.as_ref() else {
                        return Ok(None);
                    };
                    if mu_moon != 0.0 {
                        let (_, gc) = round_start.forward(&x)?;
                        let (_, pc) = prev.forward(&x)?;
                        return moon_term(cache.features(), gc.features(), pc.features(), mu_moon, temperature)
                            .map(Some);
                    }
                    if mu_pf != 0.0 || gamma_pf != 0.0 {
                        let (Some(agg), Some(prev)) = (round_start.as_fenda(), prev.as_fenda()) else {
                            return Ok(None);
                        };
                        let aggregated_global = agg.global_extractor().predict(&x)?;
                        let previous_global = prev.global_extractor().predict(&x)?;
                        let previous_local = prev.local_extractor().predict(&x)?;
                        let anchors = PerFclAnchors {
                            aggregated_global: &aggregated_global,
                            previous_global: &previous_global,
                            previous_local: &previous_local,
                        };
                        let local = cache.local_features().expect("fenda cache");
                        return perfcl_terms(cache.features(), local, &anchors, mu_pf, gamma_pf, temperature).map(Some);
                    }
                    Ok(None)
                })?;
                if !(loss.is_finite() && extra_loss.is_finite()) {
                    return Err(diverged(msg, id, "training loss", loss + extra_loss));
                }
                if mu_prox != 0.0 {
                    let w = model.flatten();
                    for ((gi, wi), ai) in g.values_mut().iter_mut().zip(w.values()).zip(round_start_flat.values()) {
                        *gi += mu_prox * (wi - ai);
                    }
                }
                if let Some(corr) = &correction {
                    for (gi, ci) in g.values_mut().iter_mut().zip(corr) {
                        *gi += ci;
                    }
                }
                apply_step(model, optimizer, &g)?;
                loss_sum += loss;
            }

            if kind == StrategyKind::Scaffold && steps > 0 {
                let c = msg.control.as_ref().expect("checked above");
                let c_i = client.scaffold_c.as_mut().expect("scaffold client has c_i");
                let y = client.model.federated_params(kind)?;
                let scale = 1.0 / (steps as f64 * strategy.client_lr);
                let mut delta = Vec::with_capacity(c_i.len());
                for j in 0..c_i.len() {
                    let updated = c_i[j] - c[j] + (round_start_flat.values()[j] - y.values()[j]) * scale;
                    delta.push(updated - c_i[j]);
                    c_i[j] = updated;
                }
                c_delta = Some(delta);
            } else if kind == StrategyKind::Scaffold {
                c_delta = Some(vec![0.0; client.scaffold_c.as_ref().map_or(0, Vec::len)]);
            }
            if matches!(kind, StrategyKind::Moon | StrategyKind::PerFcl) {
                if let ClientModel::Single { model, .. } = &client.model {
                    client.previous = Some(model.clone());
                }
            }
        }
    }

    let payload = client.model.federated_params(kind)?;
    if !payload.is_finite() {
        return Err(diverged(msg, id, "a parameter", f64::NAN));
    }
    Ok(ClientUpdate {
        client_id: id,
        payload,
        n_train,
        train_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
        scaffold_c_delta: c_delta,
    })
}
