//! Differentiable building blocks shared by the generator and discriminator:
//! convolutions, linear layers, batch normalization, activations, padding,
//! and weight initialization. Everything is `f64` and single-threaded per
//! sample; parallelism happens across samples and inside large matrix
//! products.

pub mod act;
pub mod conv;
pub mod gemm;
pub mod init;
pub mod linear;
pub mod norm;
pub mod pad;

pub use conv::{ConvParams, ConvTransposeParams};
pub use linear::LinearParams;
pub use norm::BatchNormParams;

/// Uniform traversal over every parameter tensor of a model, in a fixed
/// order. Optimizers, checkpoints and finite-difference harnesses all walk
/// parameters through this trait so they agree on ordering.
pub trait ParamTensors {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64]));
    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(&mut |_, t| n += t.len());
        n
    }

    /// Copy every tensor out as flat vectors (visit order).
    fn to_flat(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.for_each_tensor(&mut |_, t| out.push(t.to_vec()));
        out
    }

    /// Add `delta` to the parameter at flat index `idx` (visit order across
    /// all tensors). Returns the name of the tensor touched.
    fn nudge(&mut self, idx: usize, delta: f64) -> String {
        let mut offset = 0usize;
        let mut touched = String::new();
        self.for_each_tensor_mut(&mut |name, t| {
            if touched.is_empty() && idx < offset + t.len() {
                t[idx - offset] += delta;
                touched = name.to_string();
            }
            offset += t.len();
        });
        assert!(!touched.is_empty(), "parameter index {idx} out of range");
        touched
    }

    /// Read the gradient/parameter value at flat index `idx`.
    fn value_at(&self, idx: usize) -> f64 {
        let mut offset = 0usize;
        let mut found = None;
        self.for_each_tensor(&mut |_, t| {
            if found.is_none() && idx < offset + t.len() {
                found = Some(t[idx - offset]);
            }
            offset += t.len();
        });
        found.expect("parameter index out of range")
    }
}

impl ParamTensors for ConvParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("weight", self.weight.as_slice().unwrap());
        f("bias", self.bias.as_slice().unwrap());
    }
    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weight", self.weight.as_slice_mut().unwrap());
        f("bias", self.bias.as_slice_mut().unwrap());
    }
}

impl ParamTensors for ConvTransposeParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("weight", self.weight.as_slice().unwrap());
        f("bias", self.bias.as_slice().unwrap());
    }
    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weight", self.weight.as_slice_mut().unwrap());
        f("bias", self.bias.as_slice_mut().unwrap());
    }
}

impl ParamTensors for LinearParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("weight", self.weight.as_slice().unwrap());
        f("bias", self.bias.as_slice().unwrap());
    }
    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weight", self.weight.as_slice_mut().unwrap());
        f("bias", self.bias.as_slice_mut().unwrap());
    }
}

impl ParamTensors for BatchNormParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("gamma", self.gamma.as_slice().unwrap());
        f("beta", self.beta.as_slice().unwrap());
    }
    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("gamma", self.gamma.as_slice_mut().unwrap());
        f("beta", self.beta.as_slice_mut().unwrap());
    }
}
