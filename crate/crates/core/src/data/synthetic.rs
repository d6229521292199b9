use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ClientData, FederatedDataset, Provenance, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{SeedTree, StreamRng};

/// Knobs for a synthetic binary task split across clients.
///
/// With every shift knob at zero the clients are IID draws of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_clients: usize,
    /// Training-pool rows per client (train + validation).
    pub n_per_client: usize,
    /// Test rows per client; defaults to `n_per_client`.
    #[serde(default)]
    pub n_test_per_client: Option<usize>,
    pub d: usize,
    /// Scale of a per-client mean offset along a random unit direction.
    #[serde(default)]
    pub covariate_shift: f64,
    /// Spread of per-client positive-class priors, in `[0, 1)`.
    #[serde(default)]
    pub label_shift: f64,
    /// Scale of the per-client rotation of the decision direction.
    #[serde(default)]
    pub concept_shift: f64,
    /// Standard deviation of extra isotropic feature noise.
    #[serde(default)]
    pub noise: f64,
    /// Distance between class means along the decision direction.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn iid(n_clients: usize, n_per_client: usize, d: usize) -> Self {
        Self {
            n_clients,
            n_per_client,
            n_test_per_client: None,
            d,
            covariate_shift: 0.0,
            label_shift: 0.0,
            concept_shift: 0.0,
            noise: 0.0,
            separation: default_separation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("synthetic data needs at least one client".into()));
        }
        if self.n_per_client < 10 {
            return Err(Error::Config(format!(
                "n_per_client must be at least 10, got {}",
                self.n_per_client
            )));
        }
        if self.n_test_per_client == Some(0) {
            return Err(Error::Config("n_test_per_client must be positive".into()));
        }
        if self.d < 2 {
            return Err(Error::Config("synthetic data needs d >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.label_shift) {
            return Err(Error::Config(format!(
                "label_shift must lie in [0, 1), got {}",
                self.label_shift
            )));
        }
        for (name, v) in [
            ("covariate_shift", self.covariate_shift),
            ("concept_shift", self.concept_shift),
            ("noise", self.noise),
            ("separation", self.separation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Per-client parameters of the generating process.
struct ClientTask {
    prior: f64,
    direction: Vec<f64>,
    bend_axis: Vec<f64>,
    offset: Vec<f64>,
}

impl ClientTask {
    fn sample(&self, spec: &SyntheticSpec, n: usize, rng: &mut StreamRng) -> TabularDataset {
        let d = spec.d;
        let mut values = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let y = usize::from(rng.random::<f64>() < self.prior);
            let z = gaussian(rng, d);
            let sign = if y == 1 { 1.0 } else { -1.0 };
            // mild curvature of the class boundary along the bend axis
            let bend = 0.3 * (dot(&z, &self.bend_axis).powi(2) - 1.0);
            let along = 0.5 * sign * spec.separation + bend;
            for j in 0..d {
                let mut x = z[j] + along * self.direction[j] + self.offset[j];
                if spec.noise > 0.0 {
                    let e: f64 = StandardNormal.sample(rng);
                    x += spec.noise * e;
                }
                values.push(x);
            }
            labels.push(y);
        }
        let features = Matrix::from_raw(n, d, values);
        TabularDataset::new(features, labels).expect("shapes agree")
    }
}

/// Generates a federated binary task with controllable label, covariate and
/// concept shift. Bitwise deterministic in `(spec, seed)`.
pub fn generate_synthetic_federated(spec: &SyntheticSpec, seed: u64) -> Result<FederatedDataset> {
    spec.validate()?;
    let tree = SeedTree::new(seed).child("synthetic");
    let mut task_rng = tree.stream("task");
    let base = normalize(gaussian(&mut task_rng, spec.d));
    let raw = gaussian(&mut task_rng, spec.d);
    let proj = dot(&raw, &base);
    let ortho = normalize(raw.iter().zip(&base).map(|(r, b)| r - proj * b).collect());

    let clients = (0..spec.n_clients)
        .map(|i| {
            let mut rng = tree.child("client").stream(i);
            // position of the client in [-1, 1]; extremes get the largest shifts
            let s = if spec.n_clients > 1 {
                2.0 * i as f64 / (spec.n_clients - 1) as f64 - 1.0
            } else {
                0.0
            };
            let theta = spec.concept_shift * s * std::f64::consts::FRAC_PI_4;
            let (sin, cos) = theta.sin_cos();
            let direction: Vec<f64> = base.iter().zip(&ortho).map(|(b, o)| cos * b + sin * o).collect();
            let bend_axis: Vec<f64> = base.iter().zip(&ortho).map(|(b, o)| -sin * b + cos * o).collect();
            let u = normalize(gaussian(&mut rng, spec.d));
            let offset = u.iter().map(|x| spec.covariate_shift * x).collect();
            let task = ClientTask {
                prior: 0.5 + 0.5 * spec.label_shift * s,
                direction,
                bend_axis,
                offset,
            };
            let train = task.sample(spec, spec.n_per_client, &mut rng);
            let test = task.sample(spec, spec.n_test_per_client.unwrap_or(spec.n_per_client), &mut rng);
            ClientData {
                client_id: i,
                train,
                test,
            }
        })
        .collect();
    FederatedDataset::new(
        clients,
        Provenance::Synthetic {
            spec: spec.clone(),
            seed,
        },
    )
}
