//! Adam over any parameter set that exposes [`ParamTensors`]. Moment
//! buffers are laid out in visit order and allocated on first use.

use crate::nn::ParamTensors;

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update: `p -= lr · m̂ / (√v̂ + eps)`.
    pub fn step<P: ParamTensors>(&mut self, params: &mut P, grads: &P, lr: f64) {
        let g = grads.to_flat();
        if self.m.is_empty() {
            self.m = g.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = g.iter().map(|t| vec![0.0; t.len()]).collect();
        }
        assert_eq!(self.m.len(), g.len(), "optimizer bound to a different model");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut ti = 0usize;
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.for_each_tensor_mut(&mut |_, p| {
            let gt = &g[ti];
            let mt = &mut ms[ti];
            let vt = &mut vs[ti];
            assert_eq!(p.len(), gt.len());
            for i in 0..p.len() {
                let gi = gt[i];
                mt[i] = b1 * mt[i] + (1.0 - b1) * gi;
                vt[i] = b2 * vt[i] + (1.0 - b2) * gi * gi;
                let mhat = mt[i] / bc1;
                let vhat = vt[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            ti += 1;
        });
    }
}
