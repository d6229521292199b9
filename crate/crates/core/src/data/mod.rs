//! Tabular datasets, per-client splits and synthetic heterogeneous clients.

mod csv;
mod projection;
mod split;
mod synthetic;

pub use self::csv::{load_csv, CsvSchema, CsvTable};
pub use projection::{apply_local_projection, apply_projections, random_orthonormal};
pub use split::{resample_balance, split_indices, split_train_val, TRAIN_FRACTION};
pub use synthetic::{generate_synthetic_federated, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::SeedTree;

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Matrix,
    labels: Vec<usize>,
    feature_names: Option<Vec<String>>,
}

impl TabularDataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::dim("labels", features.rows(), labels.len()));
        }
        Ok(Self {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.features.cols() {
            return Err(Error::dim("feature names", self.features.cols(), names.len()));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    pub fn select(&self, indices: &[usize]) -> TabularDataset {
        TabularDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Row-wise concatenation.
    pub fn concat(&self, other: &TabularDataset) -> Result<TabularDataset> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(TabularDataset {
            features: self.features.vcat(&other.features)?,
            labels,
            feature_names: self.feature_names.clone(),
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let k = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut c = vec![0; k.max(2)];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len() as f64
    }

    pub(crate) fn map_features(&self, f: impl FnOnce(&Matrix) -> Result<Matrix>) -> Result<TabularDataset> {
        Ok(TabularDataset {
            features: f(&self.features)?,
            labels: self.labels.clone(),
            feature_names: None,
        })
    }
}

/// A client's data before the per-run validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub client_id: usize,
    /// Rows available for training and validation.
    pub train: TabularDataset,
    pub test: TabularDataset,
}

/// A client's data for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSplit {
    pub client_id: usize,
    pub train: TabularDataset,
    pub val: TabularDataset,
    pub test: TabularDataset,
    /// Indices into [`ClientData::train`] that went to `val`.
    pub val_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Csv {
        train: String,
        test: Option<String>,
    },
    Synthetic {
        spec: SyntheticSpec,
        seed: u64,
    },
    Projected {
        base: Box<Provenance>,
        out_dim: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub clients: Vec<ClientData>,
    pub provenance: Provenance,
}

impl FederatedDataset {
    pub fn new(clients: Vec<ClientData>, provenance: Provenance) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::Data("a federated dataset needs at least one client".into()));
        }
        for (i, c) in clients.iter().enumerate() {
            if c.client_id != i {
                return Err(Error::Data(format!(
                    "client ids must be 0..n in order, found {} at {i}",
                    c.client_id
                )));
            }
            if c.train.dim() != c.test.dim() {
                return Err(Error::dim("client test features", c.train.dim(), c.test.dim()));
            }
        }
        Ok(Self { clients, provenance })
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Per-client feature dimension.
    pub fn dims(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.train.dim()).collect()
    }

    /// The shared feature dimension, if every client has the same one.
    pub fn shared_dim(&self) -> Option<usize> {
        let d = self.clients[0].train.dim();
        self.clients.iter().all(|c| c.train.dim() == d).then_some(d)
    }

    /// A copy whose test splits are empty, for selection procedures that
    /// must never see test data.
    pub fn without_test(&self) -> FederatedDataset {
        let clients = self
            .clients
            .iter()
            .map(|c| ClientData {
                client_id: c.client_id,
                train: c.train.clone(),
                test: c.test.select(&[]),
            })
            .collect();
        FederatedDataset {
            clients,
            provenance: self.provenance.clone(),
        }
    }

    /// Carves a validation set out of every client's training rows, using
    /// the `val-split` stream of `seed`, optionally class-balancing train.
    pub fn split(&self, seed: SeedTree, balance_train: bool) -> Result<Vec<ClientSplit>> {
        let tree = seed.child("val-split");
        self.clients
            .iter()
            .map(|c| {
                let mut rng = tree.stream(c.client_id);
                let (train_idx, val_idx) = split_indices(c.train.len(), TRAIN_FRACTION, &mut rng)?;
                let mut train = c.train.select(&train_idx);
                if balance_train {
                    let mut brng = seed.child("balance").stream(c.client_id);
                    train = resample_balance(&train, &mut brng)?;
                }
                Ok(ClientSplit {
                    client_id: c.client_id,
                    train,
                    val: c.train.select(&val_idx),
                    test: c.test.clone(),
                    val_indices: val_idx,
                })
            })
            .collect()
    }
}
