//! Specific encoder: a shallow Conv-ReLU stack (no instance normalization,
//! which would destroy the very statistics being extracted) that turns the
//! pseudo-target slice into style statistics. Global average pooling
//! compresses each channel to a scalar, a 1×1 reduction shrinks the code to
//! width 8, and three linear layers emit the (Ξ′, Δ′) pair(s) consumed by
//! the decoder's AdaIN layers.

use ndarray::{Array1, Array3, Axis};
use rand::Rng;

use crate::blocks::StyleStats;
use crate::error::{Error, Result};
use crate::nn::act::{relu, relu_backward};
use crate::nn::{init, ConvParams, LinearParams, ParamTensors};

use super::{GeneratorConfig, STYLE_CODE_DIM};

#[derive(Debug, Clone)]
pub struct SpeParams {
    pub convs: Vec<ConvParams>,
    /// 1×1 channel reduction applied after global average pooling.
    pub reduce: LinearParams,
    pub fc1: LinearParams,
    pub fc2: LinearParams,
    pub fc3: LinearParams,
    style_slots: usize,
    feat: usize,
}

pub struct SpeActs {
    input: Array3<f64>,
    conv_outs: Vec<Array3<f64>>,
    act_outs: Vec<Array3<f64>>,
    pooled: Array1<f64>,
    reduce_out: Array1<f64>,
    code: Array1<f64>,
    fc1_out: Array1<f64>,
    fc1_act: Array1<f64>,
    fc2_out: Array1<f64>,
    fc2_act: Array1<f64>,
}

fn gap(x: &Array3<f64>) -> Array1<f64> {
    let (_, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f64;
    x.axis_iter(Axis(0)).map(|p| p.sum() * scale).collect()
}

impl SpeParams {
    pub fn init<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let (b, m, f) = (cfg.base(), cfg.mid(), cfg.feat());
        let slots = cfg.style_slots();
        let convs = vec![
            init::conv(rng, b, 1, 7, 1, 3),
            init::conv(rng, m, b, 4, 2, 1),
            init::conv(rng, f, m, 4, 2, 1),
            init::conv(rng, f, f, 4, 2, 1),
            init::conv(rng, f, f, 4, 2, 1),
        ];
        Self {
            convs,
            reduce: init::linear(rng, STYLE_CODE_DIM, f),
            fc1: init::linear(rng, f, STYLE_CODE_DIM),
            fc2: init::linear(rng, f, f),
            fc3: init::linear(rng, 2 * f * slots, f),
            style_slots: slots,
            feat: f,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            convs: self.convs.iter().map(ConvParams::zeros_like).collect(),
            reduce: self.reduce.zeros_like(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            fc3: self.fc3.zeros_like(),
            style_slots: self.style_slots,
            feat: self.feat,
        }
    }

    pub fn style_slots(&self) -> usize {
        self.style_slots
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (c, h, w) = x.dim();
        if c != 1 {
            return Err(Error::shape(
                "spe_forward",
                format!("expected a single-channel pseudo-target, got {c} channels"),
            ));
        }
        if h < 16 || h % 16 != 0 || w < 16 || w % 16 != 0 {
            return Err(Error::shape(
                "spe_forward",
                format!("resolution {h}x{w} not divisible by the four stride-2 stages"),
            ));
        }
        Ok(())
    }

    fn split_style(&self, out: &Array1<f64>) -> Vec<StyleStats> {
        let f = self.feat;
        (0..self.style_slots)
            .map(|s| {
                let base = s * 2 * f;
                StyleStats {
                    mean: out.slice(ndarray::s![base..base + f]).to_owned(),
                    std: out.slice(ndarray::s![base + f..base + 2 * f]).to_owned(),
                }
            })
            .collect()
    }

    pub fn infer(&self, x: &Array3<f64>) -> Result<Vec<StyleStats>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for conv in &self.convs {
            h = relu(&conv.forward(&h));
        }
        let pooled = gap(&h);
        let code = relu(&self.reduce.forward(&pooled));
        let a1 = relu(&self.fc1.forward(&code));
        let a2 = relu(&self.fc2.forward(&a1));
        let out = self.fc3.forward(&a2);
        Ok(self.split_style(&out))
    }

    pub fn forward(&self, x: &Array3<f64>) -> Result<(Vec<StyleStats>, SpeActs)> {
        self.check_input(x)?;
        let mut conv_outs = Vec::with_capacity(self.convs.len());
        let mut act_outs = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for conv in &self.convs {
            let c = conv.forward(&cur);
            let a = relu(&c);
            conv_outs.push(c);
            cur = a.clone();
            act_outs.push(a);
        }
        let pooled = gap(&cur);
        let reduce_out = self.reduce.forward(&pooled);
        let code = relu(&reduce_out);
        let fc1_out = self.fc1.forward(&code);
        let fc1_act = relu(&fc1_out);
        let fc2_out = self.fc2.forward(&fc1_act);
        let fc2_act = relu(&fc2_out);
        let out = self.fc3.forward(&fc2_act);
        let style = self.split_style(&out);
        Ok((
            style,
            SpeActs {
                input: x.clone(),
                conv_outs,
                act_outs,
                pooled,
                reduce_out,
                code,
                fc1_out,
                fc1_act,
                fc2_out,
                fc2_act,
            },
        ))
    }

    /// Backward from per-slot style gradients to the pseudo-target
    /// gradient; parameter gradients accumulate into `grads`.
    pub fn backward(
        &self,
        acts: &SpeActs,
        g_style: &[StyleStats],
        grads: &mut SpeParams,
    ) -> Array3<f64> {
        debug_assert_eq!(g_style.len(), self.style_slots);
        let f = self.feat;
        let mut g_out = Array1::<f64>::zeros(2 * f * self.style_slots);
        for (s, g) in g_style.iter().enumerate() {
            let base = s * 2 * f;
            g_out.slice_mut(ndarray::s![base..base + f]).assign(&g.mean);
            g_out.slice_mut(ndarray::s![base + f..base + 2 * f]).assign(&g.std);
        }
        let g = self.fc3.backward(&acts.fc2_act, &g_out, &mut grads.fc3);
        let g = relu_backward(&acts.fc2_out, &g);
        let g = self.fc2.backward(&acts.fc1_act, &g, &mut grads.fc2);
        let g = relu_backward(&acts.fc1_out, &g);
        let g = self.fc1.backward(&acts.code, &g, &mut grads.fc1);
        let g = relu_backward(&acts.reduce_out, &g);
        let g_pooled = self.reduce.backward(&acts.pooled, &g, &mut grads.reduce);

        // broadcast GAP gradient back over the spatial grid
        let last = acts.act_outs.last().unwrap();
        let (c, h, w) = last.dim();
        let scale = 1.0 / (h * w) as f64;
        let mut g_map = Array3::<f64>::zeros((c, h, w));
        for (mut plane, &gv) in g_map.axis_iter_mut(Axis(0)).zip(g_pooled.iter()) {
            plane.fill(gv * scale);
        }

        let mut g = g_map;
        for k in (0..self.convs.len()).rev() {
            let conv_in = if k == 0 {
                &acts.input
            } else {
                &acts.act_outs[k - 1]
            };
            let gm = relu_backward(&acts.conv_outs[k], &g);
            g = self.convs[k].backward(conv_in, &gm, &mut grads.convs[k]);
        }
        g
    }
}

impl ParamTensors for SpeParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, conv) in self.convs.iter().enumerate() {
            conv.for_each_tensor(&mut |n, t| f(&format!("conv{i}.{n}"), t));
        }
        self.reduce.for_each_tensor(&mut |n, t| f(&format!("reduce.{n}"), t));
        self.fc1.for_each_tensor(&mut |n, t| f(&format!("fc1.{n}"), t));
        self.fc2.for_each_tensor(&mut |n, t| f(&format!("fc2.{n}"), t));
        self.fc3.for_each_tensor(&mut |n, t| f(&format!("fc3.{n}"), t));
    }

    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.for_each_tensor_mut(&mut |n, t| f(&format!("conv{i}.{n}"), t));
        }
        self.reduce.for_each_tensor_mut(&mut |n, t| f(&format!("reduce.{n}"), t));
        self.fc1.for_each_tensor_mut(&mut |n, t| f(&format!("fc1.{n}"), t));
        self.fc2.for_each_tensor_mut(&mut |n, t| f(&format!("fc2.{n}"), t));
        self.fc3.for_each_tensor_mut(&mut |n, t| f(&format!("fc3.{n}"), t));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::WidthScale;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(image_size: usize) -> GeneratorConfig {
        GeneratorConfig {
            image_size,
            laf_block_size: image_size / 2,
            width_scale: WidthScale::QUARTER,
            ..Default::default()
        }
    }

    #[test]
    fn emits_feature_width_style_pair() {
        let cfg = cfg(64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spe = SpeParams::init(&cfg, &mut rng);
        let x = Array3::from_shape_fn((1, 64, 64), |_| rng.random_range(-1.0..1.0));
        let style = spe.infer(&x).unwrap();
        assert_eq!(style.len(), 1);
        assert_eq!(style[0].mean.len(), 64);
        assert_eq!(style[0].std.len(), 64);
    }

    #[test]
    fn bottleneck_width_is_eight() {
        let cfg = cfg(64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spe = SpeParams::init(&cfg, &mut rng);
        assert_eq!(spe.reduce.weight.dim().0, STYLE_CODE_DIM);
        assert_eq!(spe.fc1.weight.dim().1, STYLE_CODE_DIM);
    }

    #[test]
    fn all_zero_input_gives_finite_stats() {
        let cfg = cfg(32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spe = SpeParams::init(&cfg, &mut rng);
        let style = spe.infer(&Array3::zeros((1, 32, 32))).unwrap();
        assert!(style[0].mean.iter().all(|v| v.is_finite()));
        assert!(style[0].std.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn per_layer_mode_emits_eight_slots() {
        let cfg = GeneratorConfig {
            per_layer_style: true,
            ..cfg(32)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spe = SpeParams::init(&cfg, &mut rng);
        let x = Array3::from_shape_fn((1, 32, 32), |_| rng.random_range(-1.0..1.0));
        let style = spe.infer(&x).unwrap();
        assert_eq!(style.len(), crate::networks::ADAIN_LAYERS);
    }

    #[test]
    fn wrong_resolution_rejected() {
        let cfg = cfg(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spe = SpeParams::init(&cfg, &mut rng);
        assert!(spe.infer(&Array3::zeros((1, 30, 30))).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = GeneratorConfig {
            image_size: 16,
            laf_block_size: 8,
            base_channels: 4,
            feature_channels: 8,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spe = SpeParams::init(&cfg, &mut rng);
        let x = Array3::from_shape_fn((1, 16, 16), |_| rng.random_range(-1.0..1.0));
        let (style, acts) = spe.forward(&x).unwrap();
        let g_style = vec![StyleStats {
            mean: Array1::from_shape_fn(style[0].mean.len(), |_| rng.random_range(-1.0..1.0)),
            std: Array1::from_shape_fn(style[0].std.len(), |_| rng.random_range(-1.0..1.0)),
        }];
        let mut grads = spe.zeros_like();
        let gx = spe.backward(&acts, &g_style, &mut grads);

        let loss = |p: &SpeParams, x: &Array3<f64>| {
            let s = p.infer(x).unwrap();
            (&s[0].mean * &g_style[0].mean).sum() + (&s[0].std * &g_style[0].std).sum()
        };
        let eps = 1e-5;
        for idx in [(0, 0, 0), (0, 8, 11), (0, 15, 15)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&spe, &xp) - loss(&spe, &xm)) / (2.0 * eps);
            assert!(
                (fd - gx[idx]).abs() < 1e-5 * (1.0 + fd.abs()),
                "gx[{idx:?}] fd={fd} got={}",
                gx[idx]
            );
        }
        let total = spe.param_count();
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
        let mut check_rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..12 {
            let idx = check_rng.random_range(0..total);
            let mut pp = spe.clone();
            pp.nudge(idx, eps);
            let mut pm = spe.clone();
            pm.nudge(idx, -eps);
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            let got = flat_at(idx);
            assert!(
                (fd - got).abs() < 1e-4 * (1.0 + fd.abs()),
                "param {idx}: fd={fd} got={got}"
            );
        }
    }
}
