//! Local adaptive fusion: a block-wise 1×1 convolution over modality
//! channels that fuses M source images into a single pseudo-target image.
//! Each grid cell owns its own M weights and bias, so the contribution of
//! a modality can vary by region.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LafParams {
    pub rows: usize,
    pub cols: usize,
    /// `(rows·cols, M)` — one 1×1 kernel per cell.
    pub weights: Array2<f64>,
    /// One bias per cell.
    pub bias: Array1<f64>,
}

impl LafParams {
    /// Kernels initialized to the modality mean (weights `1/M`, bias 0), so
    /// the initial pseudo-target is the pixelwise average of the sources.
    pub fn mean_init(rows: usize, cols: usize, modalities: usize) -> Self {
        Self {
            rows,
            cols,
            weights: Array2::from_elem((rows * cols, modalities), 1.0 / modalities as f64),
            bias: Array1::zeros(rows * cols),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            weights: Array2::zeros(self.weights.dim()),
            bias: Array1::zeros(self.bias.dim()),
        }
    }

    pub fn modalities(&self) -> usize {
        self.weights.dim().1
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Total learnable values: `rows·cols·(M + 1)`.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

impl crate::nn::ParamTensors for LafParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("weights", self.weights.as_slice().unwrap());
        f("bias", self.bias.as_slice().unwrap());
    }
    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weights", self.weights.as_slice_mut().unwrap());
        f("bias", self.bias.as_slice_mut().unwrap());
    }
}

fn validate(modalities: &Array3<f64>, params: &LafParams, block_size: usize) -> Result<()> {
    let (m, h, w) = modalities.dim();
    if m != params.modalities() {
        return Err(Error::shape(
            "laf_forward",
            format!("{m} modalities but kernels expect {}", params.modalities()),
        ));
    }
    if block_size == 0 || h % block_size != 0 {
        return Err(Error::Divisibility {
            op: "laf_forward",
            size: h,
            divisor: block_size.max(1),
        });
    }
    if w % block_size != 0 {
        return Err(Error::Divisibility {
            op: "laf_forward",
            size: w,
            divisor: block_size,
        });
    }
    if (h / block_size, w / block_size) != (params.rows, params.cols) {
        return Err(Error::shape(
            "laf_forward",
            format!(
                "image yields a {}x{} grid but params hold {}x{}",
                h / block_size,
                w / block_size,
                params.rows,
                params.cols
            ),
        ));
    }
    Ok(())
}

/// Fuse `(M, H, W)` stacked modality images into an `(H, W)` pseudo-target.
/// Within grid cell `(by, bx)` every output pixel is
/// `Σ_m w[cell, m]·x[m, y, x] + bias[cell]`.
pub fn laf_forward(
    modalities: &Array3<f64>,
    params: &LafParams,
    block_size: usize,
) -> Result<Array2<f64>> {
    validate(modalities, params, block_size)?;
    let (m, h, w) = modalities.dim();
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        let by = y / block_size;
        for x in 0..w {
            let cell = by * params.cols + x / block_size;
            let mut acc = params.bias[cell];
            for mi in 0..m {
                acc += params.weights[[cell, mi]] * modalities[[mi, y, x]];
            }
            out[[y, x]] = acc;
        }
    }
    Ok(out)
}

/// Gradients of [`laf_forward`] w.r.t. the stacked inputs and the kernels.
/// Parameter gradients accumulate into `grads`.
pub fn laf_backward(
    modalities: &Array3<f64>,
    params: &LafParams,
    block_size: usize,
    gy: &Array2<f64>,
    grads: &mut LafParams,
) -> Result<Array3<f64>> {
    validate(modalities, params, block_size)?;
    let (m, h, w) = modalities.dim();
    if gy.dim() != (h, w) {
        return Err(Error::shape(
            "laf_backward",
            format!("gradient shape {:?} != image shape ({h}, {w})", gy.dim()),
        ));
    }
    let mut gx = Array3::<f64>::zeros((m, h, w));
    for y in 0..h {
        let by = y / block_size;
        for x in 0..w {
            let cell = by * params.cols + x / block_size;
            let g = gy[[y, x]];
            grads.bias[cell] += g;
            for mi in 0..m {
                grads.weights[[cell, mi]] += g * modalities[[mi, y, x]];
                gx[[mi, y, x]] += g * params.weights[[cell, mi]];
            }
        }
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3, Axis};
    use approx::AbsDiffEq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stacked(m: usize, h: usize, w: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((m, h, w), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mean_kernels_average_the_modalities() {
        let x = stacked(3, 8, 8, 1);
        let params = LafParams::mean_init(2, 2, 3);
        let y = laf_forward(&x, &params, 4).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        assert!(y.abs_diff_eq(&mean, 1e-12));
    }

    #[test]
    fn selection_kernels_copy_quadrants_bit_exact() {
        let x = stacked(2, 8, 8, 2);
        let mut params = LafParams::mean_init(2, 2, 2);
        params.weights.fill(0.0);
        params.weights[[0, 0]] = 1.0; // top-left takes modality 0
        for cell in 1..4 {
            params.weights[[cell, 1]] = 1.0; // others take modality 1
        }
        let y = laf_forward(&x, &params, 4).unwrap();
        for yy in 0..8 {
            for xx in 0..8 {
                let want = if yy < 4 && xx < 4 {
                    x[[0, yy, xx]]
                } else {
                    x[[1, yy, xx]]
                };
                assert_eq!(y[[yy, xx]], want);
            }
        }
    }

    #[test]
    fn parameter_count_per_grid_structure() {
        // 256x256 at block 128, M = 2: 2x2 cells of (2 weights + 1 bias).
        let params = LafParams::mean_init(2, 2, 2);
        assert_eq!(params.param_count(), 4 * (2 + 1));
    }

    #[test]
    fn resolution_mismatch_rejected() {
        let x = stacked(2, 8, 8, 3);
        let params = LafParams::mean_init(2, 2, 2);
        assert!(laf_forward(&x, &params, 3).is_err()); // 8 % 3 != 0
        let wrong_grid = LafParams::mean_init(4, 4, 2);
        assert!(laf_forward(&x, &wrong_grid, 4).is_err());
        let wrong_m = LafParams::mean_init(2, 2, 3);
        assert!(laf_forward(&x, &wrong_m, 4).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = stacked(2, 6, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = LafParams::mean_init(3, 3, 2);
        params.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        params.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let gy = Array2::from_shape_fn((6, 6), |_| rng.random_range(-1.0..1.0));
        let mut grads = params.zeros_like();
        let gx = laf_backward(&x, &params, 2, &gy, &mut grads).unwrap();

        let loss = |x: &Array3<f64>, p: &LafParams| (&laf_forward(x, p, 2).unwrap() * &gy).sum();
        let eps = 1e-6;
        for idx in [(0, 0, 0), (1, 5, 5), (0, 3, 2)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&xp, &params) - loss(&xm, &params)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-7);
        }
        for cell in [0usize, 4, 8] {
            for mi in 0..2 {
                let mut pp = params.clone();
                pp.weights[[cell, mi]] += eps;
                let mut pm = params.clone();
                pm.weights[[cell, mi]] -= eps;
                let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
                assert!((fd - grads.weights[[cell, mi]]).abs() < 1e-7);
            }
            let mut pp = params.clone();
            pp.bias[cell] += eps;
            let mut pm = params.clone();
            pm.bias[cell] -= eps;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
            assert!((fd - grads.bias[cell]).abs() < 1e-7);
        }
    }

    proptest! {
        /// With zero biases the fusion is linear in its inputs.
        #[test]
        fn linear_in_inputs_when_bias_is_zero(seed in 0u64..500, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = stacked(2, 4, 4, seed);
            let z = stacked(2, 4, 4, seed.wrapping_add(1));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let mut params = LafParams::mean_init(2, 2, 2);
            params.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            let combined = laf_forward(&(&x * a + &z * b), &params, 2).unwrap();
            let separate = laf_forward(&x, &params, 2).unwrap() * a
                + laf_forward(&z, &params, 2).unwrap() * b;
            for (u, v) in combined.iter().zip(separate.iter()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
