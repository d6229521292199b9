use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedadam")]
    FedAdam,
    #[serde(rename = "fedprox")]
    FedProx,
    Scaffold,
    Moon,
    #[serde(rename = "fedper")]
    FedPer,
    Ditto,
    Apfl,
    #[serde(rename = "perfcl")]
    PerFcl,
    Fenda,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::FedAvg,
        StrategyKind::FedAdam,
        StrategyKind::FedProx,
        StrategyKind::Scaffold,
        StrategyKind::Moon,
        StrategyKind::FedPer,
        StrategyKind::Ditto,
        StrategyKind::Apfl,
        StrategyKind::PerFcl,
        StrategyKind::Fenda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedAdam => "fedadam",
            StrategyKind::FedProx => "fedprox",
            StrategyKind::Scaffold => "scaffold",
            StrategyKind::Moon => "moon",
            StrategyKind::FedPer => "fedper",
            StrategyKind::Ditto => "ditto",
            StrategyKind::Apfl => "apfl",
            StrategyKind::PerFcl => "perfcl",
            StrategyKind::Fenda => "fenda",
        }
    }

    /// Personalized strategies keep client-owned parameters and have no
    /// single global model to checkpoint.
    pub fn is_personalized(self) -> bool {
        matches!(
            self,
            StrategyKind::FedPer
                | StrategyKind::Ditto
                | StrategyKind::Apfl
                | StrategyKind::PerFcl
                | StrategyKind::Fenda
        )
    }

    /// Parameter roles sent to the server each round.
    pub fn federated_roles(self) -> &'static [Role] {
        match self {
            StrategyKind::FedPer | StrategyKind::Apfl | StrategyKind::PerFcl | StrategyKind::Fenda => &[Role::Global],
            _ => &[Role::Global, Role::Local, Role::Classifier],
        }
    }

    /// Whether the strategy trains a FENDA composite model.
    pub fn uses_fenda(self) -> bool {
        matches!(self, StrategyKind::PerFcl | StrategyKind::Fenda)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy hyperparameters. Only the fields relevant to `kind` may be set;
/// unset fields take their defaults through the accessor methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub client_lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_prox: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_moon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_perfcl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_perfcl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, client_lr: f64) -> Self {
        Self {
            kind,
            client_lr,
            server_lr: None,
            mu_prox: None,
            mu_moon: None,
            temperature: None,
            lambda: None,
            alpha_init: None,
            alpha_lr: None,
            mu_perfcl: None,
            gamma_perfcl: None,
            beta1: None,
            beta2: None,
            tau: None,
        }
    }

    pub fn server_lr(&self) -> f64 {
        self.server_lr.unwrap_or(match self.kind {
            StrategyKind::Scaffold => 1.0,
            _ => 0.1,
        })
    }

    pub fn mu_prox(&self) -> f64 {
        self.mu_prox.unwrap_or(0.01)
    }

    pub fn mu_moon(&self) -> f64 {
        self.mu_moon.unwrap_or(1e-3)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature.unwrap_or(0.5)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(0.01)
    }

    pub fn alpha_init(&self) -> f64 {
        self.alpha_init.unwrap_or(0.5)
    }

    pub fn alpha_lr(&self) -> f64 {
        self.alpha_lr.unwrap_or(0.1)
    }

    pub fn mu_perfcl(&self) -> f64 {
        self.mu_perfcl.unwrap_or(0.1)
    }

    pub fn gamma_perfcl(&self) -> f64 {
        self.gamma_perfcl.unwrap_or(1.0)
    }

    pub fn beta1(&self) -> f64 {
        self.beta1.unwrap_or(0.9)
    }

    pub fn beta2(&self) -> f64 {
        self.beta2.unwrap_or(0.99)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(1e-9)
    }

    fn set_fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("server_lr", self.server_lr),
            ("mu_prox", self.mu_prox),
            ("mu_moon", self.mu_moon),
            ("temperature", self.temperature),
            ("lambda", self.lambda),
            ("alpha_init", self.alpha_init),
            ("alpha_lr", self.alpha_lr),
            ("mu_perfcl", self.mu_perfcl),
            ("gamma_perfcl", self.gamma_perfcl),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("tau", self.tau),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
        .collect()
    }

    fn allowed_fields(&self) -> &'static [&'static str] {
        match self.kind {
            StrategyKind::FedAvg | StrategyKind::FedPer | StrategyKind::Fenda => &[],
            StrategyKind::FedAdam => &["server_lr", "beta1", "beta2", "tau"],
            StrategyKind::FedProx => &["mu_prox"],
            StrategyKind::Scaffold => &["server_lr"],
            StrategyKind::Moon => &["mu_moon", "temperature"],
            StrategyKind::Ditto => &["lambda"],
            StrategyKind::Apfl => &["alpha_init", "alpha_lr"],
            StrategyKind::PerFcl => &["mu_perfcl", "gamma_perfcl", "temperature"],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be >= 0, got {v}")))
            }
        };
        positive("client_lr", self.client_lr)?;
        let allowed = self.allowed_fields();
        for (name, v) in self.set_fields() {
            if !allowed.contains(&name) {
                return Err(Error::Config(format!(
                    "`{name}` does not apply to strategy {}",
                    self.kind
                )));
            }
            match name {
                "server_lr" | "temperature" | "alpha_lr" | "tau" => positive(name, v)?,
                "alpha_init" => {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Config(format!("alpha_init must lie in [0, 1], got {v}")));
                    }
                }
                "beta1" | "beta2" => {
                    if !(0.0..1.0).contains(&v) {
                        return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
                    }
                }
                _ => non_negative(name, v)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = StrategyConfig::new(StrategyKind::FedAdam, 0.1);
        assert_eq!((c.beta1(), c.beta2(), c.tau()), (0.9, 0.99, 1e-9));
        assert_eq!(StrategyConfig::new(StrategyKind::Apfl, 0.1).alpha_init(), 0.5);
        assert_eq!(StrategyConfig::new(StrategyKind::Scaffold, 0.1).server_lr(), 1.0);
    }

    #[test]
    fn irrelevant_fields_rejected() {
        let mut c = StrategyConfig::new(StrategyKind::FedAvg, 0.1);
        c.validate().unwrap();
        c.mu_prox = Some(0.1);
        assert!(c.validate().is_err());
        let mut c = StrategyConfig::new(StrategyKind::Apfl, 0.1);
        c.alpha_init = Some(1.5);
        assert!(c.validate().is_err());
        assert!(StrategyConfig::new(StrategyKind::Fenda, 0.0).validate().is_err());
    }

    #[test]
    fn serde_names() {
        let c: StrategyConfig = serde_json::from_str(r#"{"kind":"perfcl","client_lr":0.001,"mu_perfcl":0.1}"#).unwrap();
        assert_eq!(c.kind, StrategyKind::PerFcl);
        assert!(serde_json::from_str::<StrategyConfig>(r#"{"kind":"fedavg","client_lr":1,"bogus":1}"#).is_err());
    }
}
