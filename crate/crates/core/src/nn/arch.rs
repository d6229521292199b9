use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::Activation;
use super::model::{FendaModel, Model, SequentialModel, TwinModel};
use crate::error::{Error, Result};

/// Architecture description for binary classifiers with a sigmoid output.
///
/// Hidden and extractor layers use ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ModelSpec {
    /// Single sigmoid layer.
    Logistic,
    /// Dense net with the given hidden widths.
    Mlp { hidden: Vec<usize> },
    /// Parallel extractors (widths per layer, last entry is the latent size)
    /// feeding a head with optional hidden layers.
    Fenda {
        global: Vec<usize>,
        local: Vec<usize>,
        #[serde(default)]
        head_hidden: Vec<usize>,
    },
}

fn widths(input: usize, hidden: &[usize], output: Option<usize>) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.extend(output);
    d
}

fn extractor<R: Rng + ?Sized>(input: usize, layers: &[usize], rng: &mut R) -> Result<SequentialModel> {
    if layers.is_empty() {
        return Err(Error::Config("extractor needs at least one layer".into()));
    }
    SequentialModel::mlp(&widths(input, layers, None), Activation::Relu, Activation::Relu, rng)
}

impl ModelSpec {
    pub fn is_fenda(&self) -> bool {
        matches!(self, ModelSpec::Fenda { .. })
    }

    pub fn build_sequential<R: Rng + ?Sized>(&self, input_dim: usize, rng: &mut R) -> Result<SequentialModel> {
        match self {
            ModelSpec::Logistic => SequentialModel::mlp(&[input_dim, 1], Activation::Relu, Activation::Sigmoid, rng),
            ModelSpec::Mlp { hidden } => SequentialModel::mlp(
                &widths(input_dim, hidden, Some(1)),
                Activation::Relu,
                Activation::Sigmoid,
                rng,
            ),
            ModelSpec::Fenda { .. } => Err(Error::Config(
                "a FENDA spec does not describe a sequential model".into(),
            )),
        }
    }

    pub fn build_fenda<R: Rng + ?Sized>(&self, input_dim: usize, rng: &mut R) -> Result<FendaModel> {
        match self {
            ModelSpec::Fenda {
                global,
                local,
                head_hidden,
            } => {
                let g = extractor(input_dim, global, rng)?;
                let l = extractor(input_dim, local, rng)?;
                let latent = g.output_dim() + l.output_dim();
                let head = SequentialModel::mlp(
                    &widths(latent, head_hidden, Some(1)),
                    Activation::Relu,
                    Activation::Sigmoid,
                    rng,
                )?;
                FendaModel::new(g, l, head)
            }
            _ => Err(Error::Config("spec does not describe a FENDA model".into())),
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, input_dim: usize, rng: &mut R) -> Result<Model> {
        if self.is_fenda() {
            self.build_fenda(input_dim, rng).map(Model::Fenda)
        } else {
            self.build_sequential(input_dim, rng).map(Model::Sequential)
        }
    }

    /// Two independently initialised copies of the sequential architecture.
    pub fn build_twins<R: Rng + ?Sized>(&self, input_dim: usize, rng: &mut R) -> Result<TwinModel> {
        let global = self.build_sequential(input_dim, rng)?;
        let personal = self.build_sequential(input_dim, rng)?;
        TwinModel::new(global, personal)
    }
}

/// Reference architectures sized for the 13-feature heart-disease task.
pub mod heart {
    use super::ModelSpec;

    pub const INPUT_DIM: usize = 13;

    /// 14 parameters.
    pub fn logistic() -> ModelSpec {
        ModelSpec::Logistic
    }

    /// 13→10→1, 151 parameters.
    pub fn dnn() -> ModelSpec {
        ModelSpec::Mlp { hidden: vec![10] }
    }

    /// Twin 13→5→1 networks, 152 parameters together.
    pub fn apfl_twin() -> ModelSpec {
        ModelSpec::Mlp { hidden: vec![5] }
    }

    /// Two 13→5 extractors and a 10→1 head, 151 parameters.
    pub fn fenda() -> ModelSpec {
        ModelSpec::Fenda {
            global: vec![5],
            local: vec![5],
            head_hidden: vec![],
        }
    }
}
