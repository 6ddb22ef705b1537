//! Weight initialization: zero-mean normals with fan-in scaled standard
//! deviation, biases zero.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_distr::Normal;

use super::conv::{ConvParams, ConvTransposeParams};
use super::linear::LinearParams;

fn fill_normal<R: Rng>(rng: &mut R, data: &mut [f64], std: f64) {
    let dist = Normal::new(0.0, std).expect("valid std");
    for v in data.iter_mut() {
        *v = rng.sample(dist);
    }
}

pub fn conv<R: Rng>(
    rng: &mut R,
    c_out: usize,
    c_in: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> ConvParams {
    let fan_in = (c_in * kernel * kernel) as f64;
    let mut weight = Array4::<f64>::zeros((c_out, c_in, kernel, kernel));
    fill_normal(rng, weight.as_slice_mut().unwrap(), (1.0 / fan_in).sqrt());
    ConvParams {
        weight,
        bias: Array1::zeros(c_out),
        stride,
        pad,
    }
}

pub fn conv_transpose<R: Rng>(
    rng: &mut R,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> ConvTransposeParams {
    // Fan-in per output position of a stride-s transposed convolution is
    // c_in * (k/s)^2 contributions on average.
    let fan_in = (c_in * kernel * kernel) as f64 / (stride * stride) as f64;
    let mut weight = Array4::<f64>::zeros((c_in, c_out, kernel, kernel));
    fill_normal(rng, weight.as_slice_mut().unwrap(), (1.0 / fan_in).sqrt());
    ConvTransposeParams {
        weight,
        bias: Array1::zeros(c_out),
        stride,
        pad,
    }
}

pub fn linear<R: Rng>(rng: &mut R, out_dim: usize, in_dim: usize) -> LinearParams {
    let mut weight = Array2::<f64>::zeros((out_dim, in_dim));
    fill_normal(rng, weight.as_slice_mut().unwrap(), (1.0 / in_dim as f64).sqrt());
    LinearParams {
        weight,
        bias: Array1::zeros(out_dim),
    }
}
