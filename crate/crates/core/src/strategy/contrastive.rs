//! Representation-level contrastive objectives (MOON and PerFCL).

use crate::error::{Error, Result};
use crate::nn::{cosine_similarity, FeatureGrads, Matrix};

/// Gradient of `cos(a, b)` with respect to `a`; zero if either norm vanishes.
fn cosine_grad(a: &[f64], b: &[f64], out: &mut [f64], scale: f64) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return;
    }
    let cos = cosine_similarity(a, b);
    for i in 0..a.len() {
        out[i] += scale * (b[i] / (na * nb) - cos * a[i] / (na * na));
    }
}

/// Row-averaged `−log(e^{s⁺} / (e^{s⁺} + e^{s⁻}))` with `s = cos(·,·)/T`.
///
/// Returns the loss and its gradient with respect to `anchor`; `positive`
/// and `negative` are treated as constants.
pub fn contrastive_loss(
    anchor: &Matrix,
    positive: &Matrix,
    negative: &Matrix,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    for m in [positive, negative] {
        if m.rows() != anchor.rows() || m.cols() != anchor.cols() {
            return Err(Error::dim("contrastive features", anchor.cols(), m.cols()));
        }
    }
    let n = anchor.rows();
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, anchor.cols());
    for r in 0..n {
        let a = anchor.row(r);
        let sp = cosine_similarity(a, positive.row(r)) / temperature;
        let sn = cosine_similarity(a, negative.row(r)) / temperature;
        // softplus(sn - sp), computed stably
        let t = sn - sp;
        loss += if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        };
        let w = crate::nn::sigmoid(t);
        let g = &mut grad.as_mut_slice()[r * anchor.cols()..(r + 1) * anchor.cols()];
        let s = 1.0 / (temperature * n as f64);
        cosine_grad(a, positive.row(r), g, -w * s);
        cosine_grad(a, negative.row(r), g, w * s);
    }
    Ok((loss / n as f64, grad))
}

/// MOON: pull the current representation toward the global model's and away
/// from the previous local model's. Returns `mu`-scaled loss and feature gradient.
pub fn moon_term(
    features: &Matrix,
    global_features: &Matrix,
    previous_features: &Matrix,
    mu: f64,
    temperature: f64,
) -> Result<(f64, FeatureGrads)> {
    let (l, g) = contrastive_loss(features, global_features, previous_features, temperature)?;
    Ok((
        mu * l,
        FeatureGrads {
            global: Some(g.scale(mu)),
            local: None,
        },
    ))
}

/// Representations PerFCL compares against, all computed on the current batch.
pub struct PerFclAnchors<'a> {
    /// Global extractor output of the freshly aggregated model.
    pub aggregated_global: &'a Matrix,
    /// Global extractor output of this client's previous-round model.
    pub previous_global: &'a Matrix,
    /// Local extractor output of this client's previous-round model.
    pub previous_local: &'a Matrix,
}

/// PerFCL's two contrastive terms, `mu·ℓ_g + gamma·ℓ_l`.
///
/// `ℓ_g` keeps the client's global features close to the aggregated model's
/// and away from its own previous global features; `ℓ_l` keeps the local
/// features close to the previous local features and away from the
/// aggregated global features. The exact pairing is an assumption and is kept
/// in this one function.
pub fn perfcl_terms(
    global_features: &Matrix,
    local_features: &Matrix,
    anchors: &PerFclAnchors<'_>,
    mu: f64,
    gamma: f64,
    temperature: f64,
) -> Result<(f64, FeatureGrads)> {
    let (lg, gg) = contrastive_loss(
        global_features,
        anchors.aggregated_global,
        anchors.previous_global,
        temperature,
    )?;
    let (ll, gl) = contrastive_loss(
        local_features,
        anchors.previous_local,
        anchors.aggregated_global,
        temperature,
    )?;
    Ok((
        mu * lg + gamma * ll,
        FeatureGrads {
            global: Some(gg.scale(mu)),
            local: Some(gl.scale(gamma)),
        },
    ))
}
