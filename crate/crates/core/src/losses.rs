//! Training objective: conditional-GAN adversarial terms plus two weighted
//! L1 reconstruction terms (synthesized target and pseudo-target against
//! the real target).

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[CLAMP, 1 − CLAMP]` before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Weights of the two L1 terms; the adversarial weight is fixed at 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
        }
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy for the discriminator:
/// `−[ln d_real + ln(1 − d_fake)]`, natural log, clamped inputs.
pub fn discriminator_loss(d_real: f64, d_fake: f64) -> f64 {
    let r = clamp_prob(d_real);
    let f = clamp_prob(d_fake);
    -(r.ln() + (1.0 - f).ln())
}

/// Gradients of [`discriminator_loss`] w.r.t. the two probabilities.
/// Zero where the input was clamped.
pub fn discriminator_loss_grad(d_real: f64, d_fake: f64) -> (f64, f64) {
    let gr = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&d_real) {
        -1.0 / clamp_prob(d_real)
    } else {
        0.0
    };
    let gf = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&d_fake) {
        1.0 / (1.0 - clamp_prob(d_fake))
    } else {
        0.0
    };
    (gr, gf)
}

/// Non-saturating generator objective: `−ln d_fake`.
pub fn generator_adversarial_loss(d_fake: f64) -> f64 {
    -clamp_prob(d_fake).ln()
}

pub fn generator_adversarial_loss_grad(d_fake: f64) -> f64 {
    if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&d_fake) {
        -1.0 / clamp_prob(d_fake)
    } else {
        0.0
    }
}

fn mean_abs_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| acc += (x - y).abs());
    acc / a.len() as f64
}

/// `λ₁·mean|Y − Ȳ| + λ₂·mean|Y − Ȳ̄|` with mean-per-pixel reduction.
pub fn reconstruction_loss(
    real: &Array3<f64>,
    synthesized: &Array3<f64>,
    pseudo: &Array3<f64>,
    weights: &LossWeights,
) -> Result<f64> {
    if real.dim() != synthesized.dim() || real.dim() != pseudo.dim() {
        return Err(Error::shape(
            "reconstruction_loss",
            format!(
                "real {:?}, synthesized {:?}, pseudo {:?}",
                real.dim(),
                synthesized.dim(),
                pseudo.dim()
            ),
        ));
    }
    Ok(weights.lambda1 * mean_abs_diff(real, synthesized)
        + weights.lambda2 * mean_abs_diff(real, pseudo))
}

/// Gradient of the λ·mean|Y − X| term w.r.t. `X`: `(λ/N)·sign(X − Y)`,
/// zero at exact ties.
pub fn l1_grad(real: &Array3<f64>, x: &Array3<f64>, lambda: f64) -> Array3<f64> {
    let scale = lambda / x.len() as f64;
    let mut g = Array3::<f64>::zeros(x.dim());
    Zip::from(&mut g).and(x).and(real).for_each(|g, &v, &r| {
        *g = scale * (v - r).signum() * if v == r { 0.0 } else { 1.0 };
    });
    g
}

/// Full generator objective: adversarial term plus both L1 terms.
pub fn total_generator_loss(
    d_fake: f64,
    real: &Array3<f64>,
    synthesized: &Array3<f64>,
    pseudo: &Array3<f64>,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(generator_adversarial_loss(d_fake) + reconstruction_loss(real, synthesized, pseudo, weights)?)
}
