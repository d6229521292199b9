use rand_distr::{Distribution, StandardNormal};

use super::{ClientData, FederatedDataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{SeedTree, StreamRng};

/// A `d × k` matrix with orthonormal columns (Gram-Schmidt on Gaussian draws).
pub fn random_orthonormal(d: usize, k: usize, rng: &mut StreamRng) -> Result<Matrix> {
    if k == 0 || k > d {
        return Err(Error::Config(format!("projection width must be in 1..={d}, got {k}")));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        cols.push(v);
    }
    let mut m = Matrix::zeros(d, k);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    Ok(m)
}

/// Applies one projection per client to its train and test rows.
pub fn apply_projections(
    fed: &FederatedDataset,
    projections: &[Matrix],
    provenance: Provenance,
) -> Result<FederatedDataset> {
    if projections.len() != fed.n_clients() {
        return Err(Error::dim("projections", fed.n_clients(), projections.len()));
    }
    let clients = fed
        .clients
        .iter()
        .zip(projections)
        .map(|(c, p)| {
            Ok(ClientData {
                client_id: c.client_id,
                train: c.train.map_features(|x| x.matmul(p))?,
                test: c.test.map_features(|x| x.matmul(p))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FederatedDataset::new(clients, provenance)
}

/// Each client maps its features through its own random orthonormal
/// projection to `out_dim`, so feature spaces are no longer aligned.
pub fn apply_local_projection(fed: &FederatedDataset, out_dim: usize, seed: u64) -> Result<FederatedDataset> {
    let tree = SeedTree::new(seed).child("projection");
    let projections = fed
        .clients
        .iter()
        .map(|c| {
            let d = c.train.dim();
            if out_dim > d {
                return Err(Error::Config(format!(
                    "projection out_dim {out_dim} exceeds client {} feature dim {d}",
                    c.client_id
                )));
            }
            random_orthonormal(d, out_dim, &mut tree.stream(c.client_id))
        })
        .collect::<Result<Vec<_>>>()?;
    apply_projections(
        fed,
        &projections,
        Provenance::Projected {
            base: Box::new(fed.provenance.clone()),
            out_dim,
            seed,
        },
    )
}
