use super::Matrix;
use crate::error::{Error, Result};

/// Predictions are clamped into `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over a single-column prediction matrix.
///
/// `class_weights[y]` scales the per-sample term for label `y`. Returns the
/// loss and its gradient with respect to the (unclamped) predictions.
pub fn bce_loss(pred: &Matrix, targets: &[f64], class_weights: Option<[f64; 2]>) -> Result<(f64, Matrix)> {
    if pred.cols() != 1 {
        return Err(Error::dim("bce prediction columns", 1, pred.cols()));
    }
    if pred.rows() != targets.len() {
        return Err(Error::dim("bce targets", pred.rows(), targets.len()));
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(targets.len());
    for (&p_raw, &y) in pred.as_slice().iter().zip(targets) {
        let p = p_raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let w = class_weights.map_or(1.0, |cw| if y >= 0.5 { cw[1] } else { cw[0] });
        loss -= w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        grad.push(w * (p - y) / (p * (1.0 - p)) / n);
    }
    Ok((loss / n, Matrix::from_raw(pred.rows(), 1, grad)))
}
