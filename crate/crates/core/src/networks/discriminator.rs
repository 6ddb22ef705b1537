//! Discriminator: five stride-2 convolution blocks over the stacked source
//! slices plus the real/synthetic target. The first block goes straight to
//! LeakyReLU; interior blocks add batch normalization. Widths start at the
//! (scaled) base and double per block. A 1-channel projection, sigmoid and
//! spatial mean turn the final map into one realness probability per
//! sample.

use ndarray::{Array1, Array3, Array4, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::act::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward};
use crate::nn::{init, BatchNormParams, ConvParams, ParamTensors};

use super::{GeneratorConfig, DISC_BLOCKS, LEAKY_SLOPE};

#[derive(Debug, Clone)]
pub struct DiscriminatorParams {
    pub blocks: Vec<ConvParams>,
    pub norms: Vec<BatchNormParams>,
    pub proj: ConvParams,
}

pub struct DiscriminatorActs {
    input: Array4<f64>,
    conv_outs: Vec<Array4<f64>>,
    norm_outs: Vec<Array4<f64>>,
    act_outs: Vec<Array4<f64>>,
    sig_out: Array4<f64>,
}

fn conv_forward_batch(conv: &ConvParams, x: &Array4<f64>) -> Array4<f64> {
    let n = x.dim().0;
    let first = conv.forward(&x.index_axis(Axis(0), 0).to_owned());
    let (c, h, w) = first.dim();
    let mut y = Array4::<f64>::zeros((n, c, h, w));
    y.index_axis_mut(Axis(0), 0).assign(&first);
    for i in 1..n {
        let yi = conv.forward(&x.index_axis(Axis(0), i).to_owned());
        y.index_axis_mut(Axis(0), i).assign(&yi);
    }
    y
}

fn conv_backward_batch(
    conv: &ConvParams,
    x: &Array4<f64>,
    gy: &Array4<f64>,
    grads: &mut ConvParams,
) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let mut gx = Array4::<f64>::zeros((n, c, h, w));
    for i in 0..n {
        let xi = x.index_axis(Axis(0), i).to_owned();
        let gyi: Array3<f64> = gy.index_axis(Axis(0), i).to_owned();
        let gxi = conv.backward(&xi, &gyi, grads);
        gx.index_axis_mut(Axis(0), i).assign(&gxi);
    }
    gx
}

impl DiscriminatorParams {
    pub fn init<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let in_ch = cfg.modality_count + 1;
        let w = cfg.base();
        let widths: Vec<usize> = (0..DISC_BLOCKS).map(|i| w << i).collect();
        let mut blocks = Vec::with_capacity(DISC_BLOCKS);
        blocks.push(init::conv(rng, widths[0], in_ch, 4, 2, 1));
        for i in 1..DISC_BLOCKS {
            blocks.push(init::conv(rng, widths[i], widths[i - 1], 4, 2, 1));
        }
        let norms = (1..DISC_BLOCKS).map(|i| BatchNormParams::new(widths[i])).collect();
        let proj = init::conv(rng, 1, widths[DISC_BLOCKS - 1], 3, 1, 1);
        Self { blocks, norms, proj }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(ConvParams::zeros_like).collect(),
            norms: self.norms.iter().map(BatchNormParams::zeros_like).collect(),
            proj: self.proj.zeros_like(),
        }
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<()> {
        let (n, c, h, w) = x.dim();
        if n == 0 {
            return Err(Error::shape("discriminator_forward", "empty batch"));
        }
        if c != self.blocks[0].in_channels() {
            return Err(Error::shape(
                "discriminator_forward",
                format!(
                    "{c} input channels, expected {} (M sources + target)",
                    self.blocks[0].in_channels()
                ),
            ));
        }
        if h < 32 || w < 32 {
            return Err(Error::shape(
                "discriminator_forward",
                format!("resolution {h}x{w} too small for five stride-2 blocks"),
            ));
        }
        Ok(())
    }

    /// Batched forward. Input is `(N, M+1, S, S)`; output one probability
    /// in `(0, 1)` per sample.
    pub fn forward(&self, x: &Array4<f64>) -> Result<(Array1<f64>, DiscriminatorActs)> {
        self.check_input(x)?;
        let mut conv_outs = Vec::with_capacity(DISC_BLOCKS);
        let mut norm_outs = Vec::with_capacity(DISC_BLOCKS - 1);
        let mut act_outs = Vec::with_capacity(DISC_BLOCKS);
        let mut cur = x.clone();
        for (i, conv) in self.blocks.iter().enumerate() {
            let c = conv_forward_batch(conv, &cur);
            let pre = if i == 0 {
                c.clone()
            } else {
                let n = self.norms[i - 1].forward(&c);
                norm_outs.push(n.clone());
                n
            };
            let a = leaky_relu(&pre, LEAKY_SLOPE);
            conv_outs.push(c);
            cur = a.clone();
            act_outs.push(a);
        }
        let proj_out = conv_forward_batch(&self.proj, &cur);
        let sig_out = sigmoid(&proj_out);
        let n = x.dim().0;
        let spatial = (sig_out.dim().2 * sig_out.dim().3) as f64;
        let probs = Array1::from_shape_fn(n, |i| sig_out.index_axis(Axis(0), i).sum() / spatial);
        Ok((
            probs,
            DiscriminatorActs {
                input: x.clone(),
                conv_outs,
                norm_outs,
                act_outs,
                sig_out,
            },
        ))
    }

    /// Probabilities only.
    pub fn infer(&self, x: &Array4<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Backward from per-sample probability gradients to the input
    /// gradient; parameter gradients accumulate into `grads`.
    pub fn backward(
        &self,
        acts: &DiscriminatorActs,
        g_probs: &Array1<f64>,
        grads: &mut DiscriminatorParams,
    ) -> Array4<f64> {
        let sig = &acts.sig_out;
        let (n, _, ph, pw) = sig.dim();
        debug_assert_eq!(g_probs.len(), n);
        let spatial = (ph * pw) as f64;
        let mut g_sig = Array4::<f64>::zeros(sig.dim());
        for i in 0..n {
            g_sig
                .index_axis_mut(Axis(0), i)
                .fill(g_probs[i] / spatial);
        }
        let g_proj = sigmoid_backward(sig, &g_sig);
        let mut g = conv_backward_batch(&self.proj, acts.act_outs.last().unwrap(), &g_proj, &mut grads.proj);

        for i in (0..self.blocks.len()).rev() {
            let pre = if i == 0 {
                &acts.conv_outs[0]
            } else {
                &acts.norm_outs[i - 1]
            };
            let g_pre = leaky_relu_backward(pre, &g, LEAKY_SLOPE);
            let g_conv = if i == 0 {
                g_pre
            } else {
                self.norms[i - 1].backward(&acts.conv_outs[i], &g_pre, &mut grads.norms[i - 1])
            };
            let conv_in = if i == 0 { &acts.input } else { &acts.act_outs[i - 1] };
            g = conv_backward_batch(&self.blocks[i], conv_in, &g_conv, &mut grads.blocks[i]);
        }
        g
    }
}

impl ParamTensors for DiscriminatorParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.for_each_tensor(&mut |n, t| f(&format!("block{i}.{n}"), t));
        }
        for (i, norm) in self.norms.iter().enumerate() {
            norm.for_each_tensor(&mut |n, t| f(&format!("norm{i}.{n}"), t));
        }
        self.proj.for_each_tensor(&mut |n, t| f(&format!("proj.{n}"), t));
    }

    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.for_each_tensor_mut(&mut |n, t| f(&format!("block{i}.{n}"), t));
        }
        for (i, norm) in self.norms.iter_mut().enumerate() {
            norm.for_each_tensor_mut(&mut |n, t| f(&format!("norm{i}.{n}"), t));
        }
        self.proj.for_each_tensor_mut(&mut |n, t| f(&format!("proj.{n}"), t));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::WidthScale;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_cfg() -> GeneratorConfig {
        GeneratorConfig {
            image_size: 32,
            laf_block_size: 16,
            width_scale: WidthScale::QUARTER,
            ..Default::default()
        }
    }

    #[test]
    fn produces_probability_per_sample() {
        let cfg = desk_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DiscriminatorParams::init(&cfg, &mut rng);
        let x = Array4::from_shape_fn((3, 3, 32, 32), |_| rng.random_range(-1.0..1.0));
        let probs = d.infer(&x).unwrap();
        assert_eq!(probs.len(), 3);
        assert!(probs.iter().all(|&p| (0.0..1.0).contains(&p) && p > 0.0));
    }

    #[test]
    fn full_scale_structure() {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DiscriminatorParams::init(&cfg, &mut rng);
        assert_eq!(d.blocks.len(), DISC_BLOCKS);
        assert_eq!(d.blocks[0].out_channels(), 64);
        assert_eq!(d.blocks[0].in_channels(), 3); // 2 sources + target
        for i in 1..DISC_BLOCKS {
            assert_eq!(d.blocks[i].out_channels(), 64 << i);
        }
        assert_eq!(d.norms.len(), DISC_BLOCKS - 1);
    }

    #[test]
    fn zero_projection_gives_exactly_half() {
        let cfg = desk_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = DiscriminatorParams::init(&cfg, &mut rng);
        d.proj.weight.fill(0.0);
        d.proj.bias.fill(0.0);
        let x = Array4::from_shape_fn((2, 3, 32, 32), |_| rng.random_range(-1.0..1.0));
        let probs = d.infer(&x).unwrap();
        for &p in probs.iter() {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_channel_count_and_small_images() {
        let cfg = desk_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = DiscriminatorParams::init(&cfg, &mut rng);
        assert!(d.infer(&Array4::zeros((1, 4, 32, 32))).is_err());
        assert!(d.infer(&Array4::zeros((1, 3, 16, 16))).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = GeneratorConfig {
            base_channels: 4,
            feature_channels: 16,
            ..desk_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = DiscriminatorParams::init(&cfg, &mut rng);
        let x = Array4::from_shape_fn((2, 3, 32, 32), |_| rng.random_range(-1.0..1.0));
        let (probs, acts) = d.forward(&x).unwrap();
        let g_probs = Array1::from_vec(vec![1.0, -0.5]);
        let mut grads = d.zeros_like();
        let gx = d.backward(&acts, &g_probs, &mut grads);

        let loss = |d: &DiscriminatorParams, x: &Array4<f64>| {
            let p = d.infer(x).unwrap();
            p[0] - 0.5 * p[1]
        };
        assert!(probs.iter().all(|p| p.is_finite()));
        let eps = 1e-5;
        for idx in [(0, 0, 0, 0), (1, 2, 31, 31), (0, 1, 15, 20)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&d, &xp) - loss(&d, &xm)) / (2.0 * eps);
            assert!(
                (fd - gx[idx]).abs() < 1e-6 * (1.0 + fd.abs()) + 1e-9,
                "gx[{idx:?}] fd={fd} got={}",
                gx[idx]
            );
        }
        let total = d.param_count();
        let flat = grads.to_flat();
        let flat_at = |idx: usize| {
            let mut off = 0;
            for t in &flat {
                if idx < off + t.len() {
                    return t[idx - off];
                }
                off += t.len();
            }
            unreachable!()
        };
        let mut check_rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let idx = check_rng.random_range(0..total);
            let mut pp = d.clone();
            pp.nudge(idx, eps);
            let mut pm = d.clone();
            pm.nudge(idx, -eps);
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            let got = flat_at(idx);
            assert!(
                (fd - got).abs() < 1e-5 * (1.0 + fd.abs()) + 1e-9,
                "param {idx}: fd={fd} got={got}"
            );
        }
    }
}
