//! Server-side aggregation rules.

use serde::{Deserialize, Serialize};

use super::client::ClientUpdate;
use super::config::{StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::nn::ParameterVector;

/// What the server broadcasts at the start of each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub round: usize,
    /// The federated parameter subset.
    pub params: ParameterVector,
    /// SCAFFOLD's server control variate `c`.
    pub control: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub global_params: ParameterVector,
    pub fedadam_m: Vec<f64>,
    pub fedadam_v: Vec<f64>,
    pub scaffold_c: Vec<f64>,
    /// Completed rounds.
    pub round: usize,
}

impl ServerState {
    pub fn new(global_params: ParameterVector) -> Self {
        let n = global_params.len();
        Self {
            global_params,
            fedadam_m: vec![0.0; n],
            fedadam_v: vec![0.0; n],
            scaffold_c: vec![0.0; n],
            round: 0,
        }
    }

    pub fn message(&self, kind: StrategyKind) -> ServerMessage {
        ServerMessage {
            round: self.round + 1,
            params: self.global_params.clone(),
            control: (kind == StrategyKind::Scaffold).then(|| self.scaffold_c.clone()),
        }
    }

    /// Applies the strategy's aggregation rule to one round of updates.
    pub fn aggregate(&mut self, strategy: &StrategyConfig, updates: &[ClientUpdate]) -> Result<()> {
        let next = match strategy.kind {
            StrategyKind::FedAdam => server_aggregate_fedadam(self, strategy, updates)?,
            StrategyKind::Scaffold => {
                let (x, c) = server_aggregate_scaffold(self, updates, strategy.server_lr())?;
                self.scaffold_c = c;
                x
            }
            _ => server_aggregate_fedavg(updates)?,
        };
        if next.len() != self.global_params.len() {
            return Err(Error::dim(
                "aggregated parameters",
                self.global_params.len(),
                next.len(),
            ));
        }
        self.global_params = next;
        self.round += 1;
        Ok(())
    }
}

fn check_updates(updates: &[ClientUpdate]) -> Result<usize> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Config("aggregation needs at least one client update".into()))?;
    let len = first.payload.len();
    for u in updates {
        if u.payload.len() != len {
            return Err(Error::dim("client payload", len, u.payload.len()));
        }
    }
    Ok(len)
}

/// Sample-count weighted average `Σ nᵢ·pᵢ / Σ nᵢ`, accumulated in ascending
/// client order with normalised weights.
pub fn server_aggregate_fedavg(updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let len = check_updates(updates)?;
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.client_id);
    let total: f64 = order.iter().map(|u| u.n_train as f64).sum();
    if total <= 0.0 {
        return Err(Error::Config("aggregation needs a positive total sample count".into()));
    }
    let mut acc = vec![0.0; len];
    for u in &order {
        let w = u.n_train as f64 / total;
        for (a, p) in acc.iter_mut().zip(u.payload.values()) {
            *a += w * p;
        }
    }
    ParameterVector::new(acc, order[0].payload.roles().to_vec())
}

/// FedAdam without bias correction:
/// `Δ = avg − x; m ← β₁m + (1−β₁)Δ; v ← β₂v + (1−β₂)Δ²; x ← x + η·m/(√v + τ)`.
pub fn server_aggregate_fedadam(
    state: &mut ServerState,
    strategy: &StrategyConfig,
    updates: &[ClientUpdate],
) -> Result<ParameterVector> {
    let avg = server_aggregate_fedavg(updates)?;
    state.global_params.check_same_len(&avg, "fedadam update")?;
    let (b1, b2, tau, eta) = (strategy.beta1(), strategy.beta2(), strategy.tau(), strategy.server_lr());
    let mut x = state.global_params.clone();
    for (i, xi) in x.values_mut().iter_mut().enumerate() {
        let delta = avg.values()[i] - *xi;
        state.fedadam_m[i] = b1 * state.fedadam_m[i] + (1.0 - b1) * delta;
        state.fedadam_v[i] = b2 * state.fedadam_v[i] + (1.0 - b2) * delta * delta;
        *xi += eta * state.fedadam_m[i] / (state.fedadam_v[i].sqrt() + tau);
    }
    Ok(x)
}

/// SCAFFOLD with full participation: `x ← x + η_g·mean(yᵢ − x)`,
/// `c ← c + mean(Δcᵢ)`. Returns the new `(x, c)`.
pub fn server_aggregate_scaffold(
    state: &ServerState,
    updates: &[ClientUpdate],
    server_lr: f64,
) -> Result<(ParameterVector, Vec<f64>)> {
    let len = check_updates(updates)?;
    if len != state.global_params.len() {
        return Err(Error::dim("scaffold payload", state.global_params.len(), len));
    }
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.client_id);
    let n = order.len() as f64;
    let mut dx = vec![0.0; len];
    let mut dc = vec![0.0; len];
    for u in &order {
        let delta_c = u
            .scaffold_c_delta
            .as_ref()
            .ok_or_else(|| Error::Config(format!("client {} sent no control-variate delta", u.client_id)))?;
        if delta_c.len() != len {
            return Err(Error::dim("control-variate delta", len, delta_c.len()));
        }
        for i in 0..len {
            dx[i] += u.payload.values()[i] - state.global_params.values()[i];
            dc[i] += delta_c[i];
        }
    }
    let mut x = state.global_params.clone();
    for (xi, d) in x.values_mut().iter_mut().zip(&dx) {
        *xi += server_lr * d / n;
    }
    let c = state.scaffold_c.iter().zip(&dc).map(|(c, d)| c + d / n).collect();
    Ok((x, c))
}
