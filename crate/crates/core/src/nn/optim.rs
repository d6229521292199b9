use serde::{Deserialize, Serialize};

use super::ParameterVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    /// AdamW with its customary defaults (0.9, 0.999, 1e-8, weight decay 0.01).
    pub fn adamw() -> Self {
        OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::AdamW { .. } => (vec![0.0; n_params], vec![0.0; n_params]),
        };
        Ok(Self {
            kind,
            lr,
            step: 0,
            m,
            v,
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr, 0)
    }

    pub fn adamw(lr: f64, n_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::adamw(), lr, n_params)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&mut self, params: &mut ParameterVector, grads: &ParameterVector) -> Result<()> {
        params.check_same_len(grads, "optimizer gradients")?;
        self.step_slice(params.values_mut(), grads.values())
    }

    /// One update. SGD: `p -= lr * g`. AdamW: decoupled weight decay
    /// `p -= lr * wd * p`, then a bias-corrected Adam step.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("optimizer gradients", params.len(), grads.len()));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                if self.m.len() != params.len() {
                    return Err(Error::dim("adamw state", self.m.len(), params.len()));
                }
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    params[i] -= self.lr * weight_decay * params[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Role;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::uniform(v.to_vec(), Role::Global)
    }

    #[test]
    fn sgd_definition() {
        let mut s = OptimizerState::sgd(0.1).unwrap();
        let mut p = pv(&[1.0]);
        s.step(&mut p, &pv(&[0.5])).unwrap();
        assert_eq!(p.values(), &[0.95]);
    }

    #[test]
    fn adamw_zero_gradient_no_decay_is_identity() {
        let kind = OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut s = OptimizerState::new(kind, 0.1, 2).unwrap();
        let mut p = pv(&[1.0, -2.0]);
        s.step(&mut p, &pv(&[0.0, 0.0])).unwrap();
        assert_eq!(p.values(), &[1.0, -2.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn adamw_first_step_hand_oracle() {
        let kind = OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut s = OptimizerState::new(kind, 0.1, 1).unwrap();
        let mut p = pv(&[1.0]);
        s.step(&mut p, &pv(&[1.0])).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-15);
        assert!((p.values()[0] - 0.9).abs() < 2e-9);
    }

    #[test]
    fn adamw_weight_decay_is_decoupled() {
        let mut s = OptimizerState::adamw(0.1, 1).unwrap();
        let mut p = pv(&[2.0]);
        s.step(&mut p, &pv(&[0.0])).unwrap();
        assert!((p.values()[0] - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
        assert!(s.second_moment().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn rejects_mismatch_and_bad_lr() {
        let mut s = OptimizerState::sgd(0.1).unwrap();
        assert!(s.step(&mut pv(&[1.0]), &pv(&[1.0, 2.0])).is_err());
        assert!(OptimizerState::sgd(0.0).is_err());
    }
}
