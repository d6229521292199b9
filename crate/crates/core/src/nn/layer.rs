use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `y = activation(x · W + b)` with `W` of shape `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

pub(crate) struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Matrix,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::dim("layer bias", weights.cols(), bias.len()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Fan-in uniform initialisation in `±sqrt(1/in_dim)` for weights and bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        let bound = (1.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self {
            weights: Matrix::from_raw(in_dim, out_dim, weights),
            bias,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.in_dim() * self.out_dim() + self.out_dim()
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(&self.bias)
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.as_mut_slice().iter_mut().chain(&mut self.bias)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::dim("layer input", self.in_dim(), x.cols()));
        }
        let mut z = x.matmul(&self.weights)?;
        let out = self.out_dim();
        for (i, v) in z.as_mut_slice().iter_mut().enumerate() {
            *v = self.activation.apply(*v + self.bias[i % out]);
        }
        Ok(z)
    }

    /// Reverse pass given the layer input, its output and `dL/d(output)`.
    pub(crate) fn backward(&self, input: &Matrix, output: &Matrix, d_out: &Matrix) -> LayerGrads {
        let (n, in_dim, out_dim) = (input.rows(), self.in_dim(), self.out_dim());
        let mut dz = d_out.clone();
        for (d, y) in dz.as_mut_slice().iter_mut().zip(output.as_slice()) {
            *d *= self.activation.derivative_from_output(*y);
        }
        let mut d_w = vec![0.0; in_dim * out_dim];
        let mut d_b = vec![0.0; out_dim];
        let mut d_in = vec![0.0; n * in_dim];
        let w = self.weights.as_slice();
        for r in 0..n {
            let dz_row = dz.row(r);
            let x_row = input.row(r);
            for (b, g) in d_b.iter_mut().zip(dz_row) {
                *b += g;
            }
            for k in 0..in_dim {
                let xk = x_row[k];
                let w_row = &w[k * out_dim..(k + 1) * out_dim];
                let dw_row = &mut d_w[k * out_dim..(k + 1) * out_dim];
                let mut acc = 0.0;
                for j in 0..out_dim {
                    dw_row[j] += xk * dz_row[j];
                    acc += dz_row[j] * w_row[j];
                }
                d_in[r * in_dim + k] = acc;
            }
        }
        LayerGrads {
            weights: d_w,
            bias: d_b,
            input: Matrix::from_raw(n, in_dim, d_in),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!(sigmoid(1000.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bias_length_checked() {
        assert!(DenseLayer::new(Matrix::zeros(2, 3), vec![0.0; 2], Activation::Relu).is_err());
    }
}
