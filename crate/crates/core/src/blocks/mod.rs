//! Differentiable fusion blocks: instance normalization, adaptive instance
//! normalization (AdaIN), block partition/reassembly, local adaptive fusion
//! (LAF) and concat-then-convolve (Cat-Conv) fusion.
//!
//! All operations are pure functions of `(parameters, input)` and are safe
//! to call concurrently on shared read-only parameters.

mod cat_conv;
mod laf;
mod partition;

pub use cat_conv::{cat_conv_backward, cat_conv_forward};
pub use laf::{laf_backward, laf_forward, LafParams};
pub use partition::{partition_blocks, reassemble_blocks, BlockGrid};

use ndarray::{Array1, Array3, Axis};

use crate::error::{Error, Result};

/// Modality-invariant feature map, laid out `(channels, height, width)`.
pub type FeatureMap = Array3<f64>;

/// Epsilon added to the standard deviation in all normalization
/// denominators; guards constant channels.
pub const NORM_EPS: f64 = 1e-5;

/// The specific-information pair produced by the specific encoder: a mean
/// and a standard deviation per feature channel. The standard deviation is
/// unconstrained in sign.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl StyleStats {
    pub fn new(mean: Array1<f64>, std: Array1<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape(
                "StyleStats",
                format!("mean length {} != std length {}", mean.len(), std.len()),
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn channel_moments(plane: &ndarray::ArrayView2<f64>) -> (f64, f64) {
    let n = plane.len() as f64;
    let mean = plane.sum() / n;
    let var = plane.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / n;
    (mean, var.sqrt())
}

/// Per-channel normalization `(x − μ_c) / (σ_c + ε)` with population σ.
pub fn instance_norm(x: &FeatureMap, epsilon: f64) -> FeatureMap {
    let mut y = x.clone();
    for mut plane in y.axis_iter_mut(Axis(0)) {
        let (mean, std) = channel_moments(&plane.view());
        let inv = 1.0 / (std + epsilon);
        plane.mapv_inplace(|v| (v - mean) * inv);
    }
    y
}

/// Input gradient of [`instance_norm`].
pub fn instance_norm_backward(x: &FeatureMap, gy: &FeatureMap, epsilon: f64) -> FeatureMap {
    let mut gx = FeatureMap::zeros(x.dim());
    for ((plane, gplane), mut out) in x
        .axis_iter(Axis(0))
        .zip(gy.axis_iter(Axis(0)))
        .zip(gx.axis_iter_mut(Axis(0)))
    {
        let n = plane.len() as f64;
        let (mean, std) = channel_moments(&plane);
        let d = std + epsilon;
        let g_mean = gplane.sum() / n;
        let g_dot_centered = plane
            .iter()
            .zip(gplane.iter())
            .fold(0.0, |acc, (&v, &g)| acc + g * (v - mean));
        // σ → 0 only for constant channels, where the centered term vanishes.
        let sigma_term = if std > 1e-12 {
            g_dot_centered / (n * std * d * d)
        } else {
            0.0
        };
        for ((o, &v), &g) in out.iter_mut().zip(plane.iter()).zip(gplane.iter()) {
            *o = (g - g_mean) / d - (v - mean) * sigma_term;
        }
    }
    gx
}

/// AdaIN: normalize each channel, then rescale by externally supplied
/// statistics: `Δ′_c · (x_c − μ)/(σ + ε) + Ξ′_c`.
pub fn adain(x: &FeatureMap, stats: &StyleStats, epsilon: f64) -> Result<FeatureMap> {
    let (c, _, _) = x.dim();
    if stats.len() != c {
        return Err(Error::shape(
            "adain",
            format!("style stats length {} != channels {c}", stats.len()),
        ));
    }
    let mut y = x.clone();
    for (ci, mut plane) in y.axis_iter_mut(Axis(0)).enumerate() {
        let (mean, std) = channel_moments(&plane.view());
        let inv = 1.0 / (std + epsilon);
        let (scale, shift) = (stats.std[ci], stats.mean[ci]);
        plane.mapv_inplace(|v| scale * (v - mean) * inv + shift);
    }
    Ok(y)
}

/// Gradients of [`adain`] w.r.t. input and both style vectors.
pub fn adain_backward(
    x: &FeatureMap,
    stats: &StyleStats,
    gy: &FeatureMap,
    epsilon: f64,
) -> (FeatureMap, StyleStats) {
    let (c, _, _) = x.dim();
    debug_assert_eq!(stats.len(), c);
    let mut g_mean = Array1::<f64>::zeros(c);
    let mut g_std = Array1::<f64>::zeros(c);
    let mut gy_scaled = gy.clone();
    for (ci, (plane, mut gplane)) in x
        .axis_iter(Axis(0))
        .zip(gy_scaled.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let (mean, std) = channel_moments(&plane);
        let inv = 1.0 / (std + epsilon);
        g_mean[ci] = gplane.sum();
        g_std[ci] = plane
            .iter()
            .zip(gplane.iter())
            .fold(0.0, |acc, (&v, &g)| acc + g * (v - mean) * inv);
        let scale = stats.std[ci];
        gplane.mapv_inplace(|g| g * scale);
    }
    let gx = instance_norm_backward(x, &gy_scaled, epsilon);
    (
        gx,
        StyleStats {
            mean: g_mean,
            std: g_std,
        },
    )
}
