//! Batch normalization over `(N, C, H, W)` tensors (training statistics).
//!
//! Used by the discriminator's interior blocks. Per channel, statistics are
//! taken over the batch and both spatial axes; variance is the population
//! estimate with the usual `sqrt(var + eps)` denominator.

use ndarray::{Array1, Array4, Axis};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: Array1::zeros(self.gamma.dim()),
            beta: Array1::zeros(self.beta.dim()),
        }
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let count = (n * h * w) as f64;
        let mut y = x.clone();
        for ci in 0..c {
            let lane = x.index_axis(Axis(1), ci);
            let mean = lane.sum() / count;
            let var = lane.mapv(|v| (v - mean) * (v - mean)).sum() / count;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            let (g, b) = (self.gamma[ci], self.beta[ci]);
            y.index_axis_mut(Axis(1), ci)
                .mapv_inplace(|v| (v - mean) * inv * g + b);
        }
        y
    }

    pub fn backward(
        &self,
        x: &Array4<f64>,
        gy: &Array4<f64>,
        grads: &mut BatchNormParams,
    ) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let count = (n * h * w) as f64;
        let mut gx = Array4::<f64>::zeros((n, c, h, w));
        for ci in 0..c {
            let lane = x.index_axis(Axis(1), ci);
            let glane = gy.index_axis(Axis(1), ci);
            let mean = lane.sum() / count;
            let var = lane.mapv(|v| (v - mean) * (v - mean)).sum() / count;
            let inv = 1.0 / (var + BN_EPS).sqrt();

            // normalized activations and the two reduction terms
            let mut sum_g = 0.0;
            let mut sum_gh = 0.0;
            for (&v, &g) in lane.iter().zip(glane.iter()) {
                let hhat = (v - mean) * inv;
                sum_g += g;
                sum_gh += g * hhat;
            }
            grads.beta[ci] += sum_g;
            grads.gamma[ci] += sum_gh;

            let gamma = self.gamma[ci];
            let mean_g = sum_g / count;
            let mean_gh = sum_gh / count;
            let mut out = gx.index_axis_mut(Axis(1), ci);
            for ((o, &v), &g) in out.iter_mut().zip(lane.iter()).zip(glane.iter()) {
                let hhat = (v - mean) * inv;
                *o = gamma * inv * (g - mean_g - hhat * mean_gh);
            }
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn sample() -> Array4<f64> {
        Array4::from_shape_fn((2, 3, 4, 4), |(n, c, y, x)| {
            ((n * 37 + c * 11 + y * 5 + x) % 13) as f64 * 0.37 - 1.8
        })
    }

    #[test]
    fn normalizes_each_channel_over_batch() {
        let p = BatchNormParams::new(3);
        let x = sample();
        let y = p.forward(&x);
        for c in 0..3 {
            let lane = y.index_axis(Axis(1), c);
            let mean = lane.sum() / lane.len() as f64;
            let var = lane.mapv(|v| (v - mean) * (v - mean)).sum() / lane.len() as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_stays_finite() {
        let p = BatchNormParams::new(1);
        let x = Array4::from_elem((2, 1, 3, 3), 4.2);
        let y = p.forward(&x);
        assert!(y.iter().all(|v| v.is_finite()));
        assert!(y.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut p = BatchNormParams::new(3);
        p.gamma[1] = 1.7;
        p.beta[2] = -0.4;
        let x = sample();
        let gy = Array4::from_shape_fn((2, 3, 4, 4), |(n, c, y, x)| {
            ((n + c * 3 + y * 2 + x) % 7) as f64 * 0.5 - 1.5
        });
        let mut grads = p.zeros_like();
        let gx = p.backward(&x, &gy, &mut grads);

        let loss = |p: &BatchNormParams, x: &Array4<f64>| (&p.forward(x) * &gy).sum();
        let eps = 1e-6;
        for idx in [(0, 0, 0, 0), (1, 2, 3, 3), (0, 1, 2, 1)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-5, "gx[{idx:?}] fd={fd} got={}", gx[idx]);
        }
        for c in 0..3 {
            let mut pp = p.clone();
            pp.gamma[c] += eps;
            let mut pm = p.clone();
            pm.gamma[c] -= eps;
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            assert!((fd - grads.gamma[c]).abs() < 1e-5);
        }
    }
}
