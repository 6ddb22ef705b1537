//! Decoder: four residual blocks whose normalization layers are AdaIN
//! (style statistics supplied by the specific encoder), followed by an
//! up-sampling head of two stride-2 transposed convolutions and a 7×7
//! output convolution ending in tanh. The two transposed-conv stages undo
//! the encoder's two stride-2 stages; the stride-1 output block completes
//! the restoration chain at full resolution.

use ndarray::{Array1, Array3};
use rand::Rng;

use crate::blocks::{adain, adain_backward, FeatureMap, StyleStats, NORM_EPS};
use crate::error::Result;
use crate::nn::act::{relu, relu_backward, tanh, tanh_backward};
use crate::nn::{init, ConvParams, ConvTransposeParams, ParamTensors};

use super::sre::{res_conv_backward, res_conv_forward, res_conv_infer, ResConvActs};
use super::{GeneratorConfig, PadMode, RES_BLOCKS};

#[derive(Debug, Clone)]
pub struct AdainResParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub res: Vec<AdainResParams>,
    pub up1: ConvTransposeParams,
    pub up2: ConvTransposeParams,
    pub output: ConvParams,
    pub pad_mode: PadMode,
    per_layer_style: bool,
}

struct AdainResActs {
    c1: ResConvActs,
    n1: Array3<f64>,
    a1: Array3<f64>,
    c2: ResConvActs,
    out: Array3<f64>,
}

pub struct DecoderActs {
    input: FeatureMap,
    res: Vec<AdainResActs>,
    up1_out: Array3<f64>,
    up1_act: Array3<f64>,
    up2_out: Array3<f64>,
    up2_act: Array3<f64>,
    tanh_out: Array3<f64>,
}

impl DecoderParams {
    pub fn init<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let (b, m, f) = (cfg.base(), cfg.mid(), cfg.feat());
        let pad = if cfg.pad_mode == PadMode::Zero { 1 } else { 0 };
        Self {
            res: (0..RES_BLOCKS)
                .map(|_| AdainResParams {
                    conv1: init::conv(rng, f, f, 3, 1, pad),
                    conv2: init::conv(rng, f, f, 3, 1, pad),
                })
                .collect(),
            up1: init::conv_transpose(rng, f, m, 4, 2, 1),
            up2: init::conv_transpose(rng, m, b, 4, 2, 1),
            output: init::conv(rng, 1, b, 7, 1, 3),
            pad_mode: cfg.pad_mode,
            per_layer_style: cfg.per_layer_style,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            res: self
                .res
                .iter()
                .map(|r| AdainResParams {
                    conv1: r.conv1.zeros_like(),
                    conv2: r.conv2.zeros_like(),
                })
                .collect(),
            up1: self.up1.zeros_like(),
            up2: self.up2.zeros_like(),
            output: self.output.zeros_like(),
            pad_mode: self.pad_mode,
            per_layer_style: self.per_layer_style,
        }
    }

    fn slot(&self, layer: usize) -> usize {
        if self.per_layer_style {
            layer
        } else {
            0
        }
    }

    /// Inference path (no caches): `(feat, S/4, S/4)` + style → `(1, S, S)`.
    pub fn infer(&self, fused: &FeatureMap, style: &[StyleStats]) -> Result<Array3<f64>> {
        let mut h = fused.clone();
        for (k, block) in self.res.iter().enumerate() {
            let n1 = adain(
                &res_conv_infer(&block.conv1, &h, self.pad_mode),
                &style[self.slot(2 * k)],
                NORM_EPS,
            )?;
            let a1 = relu(&n1);
            let n2 = adain(
                &res_conv_infer(&block.conv2, &a1, self.pad_mode),
                &style[self.slot(2 * k + 1)],
                NORM_EPS,
            )?;
            h += &n2;
        }
        let h = relu(&self.up1.forward(&h));
        let h = relu(&self.up2.forward(&h));
        Ok(tanh(&self.output.forward(&h)))
    }

    pub fn forward(
        &self,
        fused: &FeatureMap,
        style: &[StyleStats],
    ) -> Result<(Array3<f64>, DecoderActs)> {
        let mut res = Vec::with_capacity(self.res.len());
        let mut cur = fused.clone();
        for (k, block) in self.res.iter().enumerate() {
            let c1 = res_conv_forward(&block.conv1, &cur, self.pad_mode);
            let n1 = adain(&c1.conv_out, &style[self.slot(2 * k)], NORM_EPS)?;
            let a1 = relu(&n1);
            let c2 = res_conv_forward(&block.conv2, &a1, self.pad_mode);
            let n2 = adain(&c2.conv_out, &style[self.slot(2 * k + 1)], NORM_EPS)?;
            let out = &cur + &n2;
            cur = out.clone();
            res.push(AdainResActs { c1, n1, a1, c2, out });
        }
        let up1_out = self.up1.forward(&cur);
        let up1_act = relu(&up1_out);
        let up2_out = self.up2.forward(&up1_act);
        let up2_act = relu(&up2_out);
        let pre = self.output.forward(&up2_act);
        let tanh_out = tanh(&pre);
        Ok((
            tanh_out.clone(),
            DecoderActs {
                input: fused.clone(),
                res,
                up1_out,
                up1_act,
                up2_out,
                up2_act,
                tanh_out,
            },
        ))
    }

    /// Backward from the synthesized-image gradient. Returns the fused-
    /// feature gradient and per-slot style gradients; parameter gradients
    /// accumulate into `grads`.
    pub fn backward(
        &self,
        style: &[StyleStats],
        acts: &DecoderActs,
        gy: &Array3<f64>,
        grads: &mut DecoderParams,
    ) -> (FeatureMap, Vec<StyleStats>) {
        let nslots = if self.per_layer_style {
            2 * self.res.len()
        } else {
            1
        };
        let feat_len = style[0].mean.len();
        let mut g_style: Vec<StyleStats> = (0..nslots)
            .map(|_| StyleStats {
                mean: Array1::zeros(feat_len),
                std: Array1::zeros(feat_len),
            })
            .collect();

        let g = tanh_backward(&acts.tanh_out, gy);
        let g = self.output.backward(&acts.up2_act, &g, &mut grads.output);
        let g = relu_backward(&acts.up2_out, &g);
        let g = self.up2.backward(&acts.up1_act, &g, &mut grads.up2);
        let g = relu_backward(&acts.up1_out, &g);
        let mut g = self.up1.backward(
            &acts.res.last().map(|r| &r.out).unwrap_or(&acts.input),
            &g,
            &mut grads.up1,
        );

        for (k, block) in self.res.iter().enumerate().rev() {
            let a = &acts.res[k];
            let block_in = if k == 0 { &acts.input } else { &acts.res[k - 1].out };
            let (g_c2, gs2) =
                adain_backward(&a.c2.conv_out, &style[self.slot(2 * k + 1)], &g, NORM_EPS);
            accumulate_style(&mut g_style[self.slot(2 * k + 1)], &gs2);
            let g_a1 = res_conv_backward(&block.conv2, &a.a1, &a.c2, &g_c2, &mut grads.res[k].conv2);
            let g_n1 = relu_backward(&a.n1, &g_a1);
            let (g_c1, gs1) =
                adain_backward(&a.c1.conv_out, &style[self.slot(2 * k)], &g_n1, NORM_EPS);
            accumulate_style(&mut g_style[self.slot(2 * k)], &gs1);
            let g_in =
                res_conv_backward(&block.conv1, block_in, &a.c1, &g_c1, &mut grads.res[k].conv1);
            g += &g_in; // skip connection
        }
        (g, g_style)
    }
}

fn accumulate_style(dst: &mut StyleStats, src: &StyleStats) {
    dst.mean.scaled_add(1.0, &src.mean);
    dst.std.scaled_add(1.0, &src.std);
}

impl ParamTensors for DecoderParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, block) in self.res.iter().enumerate() {
            block.conv1.for_each_tensor(&mut |n, t| f(&format!("res{i}.conv1.{n}"), t));
            block.conv2.for_each_tensor(&mut |n, t| f(&format!("res{i}.conv2.{n}"), t));
        }
        self.up1.for_each_tensor(&mut |n, t| f(&format!("up1.{n}"), t));
        self.up2.for_each_tensor(&mut |n, t| f(&format!("up2.{n}"), t));
        self.output.for_each_tensor(&mut |n, t| f(&format!("output.{n}"), t));
    }

    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, block) in self.res.iter_mut().enumerate() {
            block.conv1.for_each_tensor_mut(&mut |n, t| f(&format!("res{i}.conv1.{n}"), t));
            block.conv2.for_each_tensor_mut(&mut |n, t| f(&format!("res{i}.conv2.{n}"), t));
        }
        self.up1.for_each_tensor_mut(&mut |n, t| f(&format!("up1.{n}"), t));
        self.up2.for_each_tensor_mut(&mut |n, t| f(&format!("up2.{n}"), t));
        self.output.for_each_tensor_mut(&mut |n, t| f(&format!("output.{n}"), t));
    }
}
