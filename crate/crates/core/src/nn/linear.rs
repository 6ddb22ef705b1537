//! Fully-connected layer on vectors.

use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct LinearParams {
    /// `(out, in)` weight matrix.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.dim()),
            bias: Array1::zeros(self.bias.dim()),
        }
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }

    /// Returns the input gradient and accumulates parameter gradients.
    pub fn backward(&self, x: &Array1<f64>, gy: &Array1<f64>, grads: &mut LinearParams) -> Array1<f64> {
        grads.bias.scaled_add(1.0, gy);
        for (mut row, &g) in grads.weight.rows_mut().into_iter().zip(gy.iter()) {
            row.scaled_add(g, x);
        }
        self.weight.t().dot(gy)
    }
}
