//! Elementwise activations with backward passes.
//!
//! Backward functions take the activation *input* (ReLU family) or *output*
//! (tanh/sigmoid, where the derivative is cheapest in terms of the output).

use ndarray::{Array, Dimension, Zip};

pub fn relu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward<D: Dimension>(x: &Array<f64, D>, gy: &Array<f64, D>) -> Array<f64, D> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(x).for_each(|g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

pub fn leaky_relu<D: Dimension>(x: &Array<f64, D>, slope: f64) -> Array<f64, D> {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward<D: Dimension>(
    x: &Array<f64, D>,
    gy: &Array<f64, D>,
    slope: f64,
) -> Array<f64, D> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(x).for_each(|g, &v| {
        if v < 0.0 {
            *g *= slope;
        }
    });
    gx
}

pub fn tanh<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(f64::tanh)
}

/// `y` is the tanh output.
pub fn tanh_backward<D: Dimension>(y: &Array<f64, D>, gy: &Array<f64, D>) -> Array<f64, D> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(y).for_each(|g, &v| *g *= 1.0 - v * v);
    gx
}

pub fn sigmoid<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// `y` is the sigmoid output.
pub fn sigmoid_backward<D: Dimension>(y: &Array<f64, D>, gy: &Array<f64, D>) -> Array<f64, D> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(y).for_each(|g, &v| *g *= v * (1.0 - v));
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_masks_negatives() {
        let x = array![-1.0, 0.0, 2.0];
        assert_eq!(relu(&x), array![0.0, 0.0, 2.0]);
        let gy = array![1.0, 1.0, 1.0];
        assert_eq!(relu_backward(&x, &gy), array![0.0, 0.0, 1.0]);
    }

    #[test]
    fn leaky_relu_scales_negatives() {
        let x = array![-2.0, 3.0];
        assert_eq!(leaky_relu(&x, 0.2), array![-0.4, 3.0]);
        let gy = array![1.0, 1.0];
        assert_eq!(leaky_relu_backward(&x, &gy, 0.2), array![0.2, 1.0]);
    }

    #[test]
    fn tanh_sigmoid_derivatives_match_fd() {
        let x = array![0.3, -0.7, 1.5];
        let eps = 1e-6;
        let y = tanh(&x);
        let g = tanh_backward(&y, &array![1.0, 1.0, 1.0]);
        for i in 0..3 {
            let fd = ((x[i] + eps).tanh() - (x[i] - eps).tanh()) / (2.0 * eps);
            assert!((g[i] - fd).abs() < 1e-8);
        }
        let s = sigmoid(&x);
        let gs = sigmoid_backward(&s, &array![1.0, 1.0, 1.0]);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for i in 0..3 {
            let fd = (sig(x[i] + eps) - sig(x[i] - eps)) / (2.0 * eps);
            assert!((gs[i] - fd).abs() < 1e-8);
        }
    }
}
