//! Dense networks with exact reverse-mode gradients.

pub mod arch;
mod layer;
mod loss;
mod matrix;
mod model;
mod optim;
mod params;

pub use arch::ModelSpec;
pub use layer::{sigmoid, Activation, DenseLayer};
pub use loss::{bce_loss, PROB_EPS};
pub use matrix::Matrix;
pub use model::{
    FeatureGrads, FendaCache, FendaModel, ForwardCache, Model, Parameterized, SequentialCache, SequentialModel,
    TwinModel,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{ParameterVector, Role};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoleCounts {
    pub global: usize,
    pub local: usize,
    pub classifier: usize,
}

impl RoleCounts {
    pub fn total(&self) -> usize {
        self.global + self.local + self.classifier
    }
}

pub fn count_params<P: Parameterized + ?Sized>(model: &P) -> usize {
    model.param_count()
}

pub fn count_params_by_role<P: Parameterized + ?Sized>(model: &P) -> RoleCounts {
    let mut c = RoleCounts::default();
    for r in model.roles() {
        match r {
            Role::Global => c.global += 1,
            Role::Local => c.local += 1,
            Role::Classifier => c.classifier += 1,
        }
    }
    c
}

/// `a·b / (‖a‖‖b‖)`; zero when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine similarity of unequal lengths");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests;
