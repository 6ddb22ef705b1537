//! Shared encoder: one per input modality, extracting modality-invariant
//! structure into a `(feature_channels, S/4, S/4)` map.
//!
//! Layout: 7×7 stride-1 stem, two 4×4 stride-2 down-sampling blocks (each
//! Conv-IN-ReLU), then four residual blocks that keep shape and width.
//! Encoders share the structure but never the parameters.

use ndarray::Array3;
use rand::Rng;

use crate::blocks::{instance_norm, instance_norm_backward, FeatureMap, NORM_EPS};
use crate::error::{Error, Result};
use crate::nn::act::{relu, relu_backward};
use crate::nn::pad::{reflect_pad, reflect_pad_backward};
use crate::nn::{init, ConvParams, ParamTensors};

use super::{GeneratorConfig, PadMode, RES_BLOCKS};

#[derive(Debug, Clone)]
pub struct ResBlockParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

impl ResBlockParams {
    fn init<R: Rng>(rng: &mut R, channels: usize, pad_mode: PadMode) -> Self {
        let pad = if pad_mode == PadMode::Zero { 1 } else { 0 };
        Self {
            conv1: init::conv(rng, channels, channels, 3, 1, pad),
            conv2: init::conv(rng, channels, channels, 3, 1, pad),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SreParams {
    pub stem: ConvParams,
    pub down1: ConvParams,
    pub down2: ConvParams,
    pub res: Vec<ResBlockParams>,
    pub pad_mode: PadMode,
}

/// Conv input (only when explicitly padded), conv output, IN output and
/// the ReLU output that feeds the next layer.
pub(crate) struct DownActs {
    pub conv_out: Array3<f64>,
    pub norm_out: Array3<f64>,
    pub act_out: Array3<f64>,
}

pub(crate) struct ResConvActs {
    pub padded: Option<Array3<f64>>,
    pub conv_out: Array3<f64>,
}

pub(crate) struct ResBlockActs {
    pub c1: ResConvActs,
    pub n1: Array3<f64>,
    pub a1: Array3<f64>,
    pub c2: ResConvActs,
    pub out: Array3<f64>,
}

pub struct SreActs {
    pub(crate) input: Array3<f64>,
    pub(crate) stem: DownActs,
    pub(crate) down1: DownActs,
    pub(crate) down2: DownActs,
    pub(crate) res: Vec<ResBlockActs>,
}

fn down_forward(conv: &ConvParams, x: &Array3<f64>) -> DownActs {
    let conv_out = conv.forward(x);
    let norm_out = instance_norm(&conv_out, NORM_EPS);
    let act_out = relu(&norm_out);
    DownActs {
        conv_out,
        norm_out,
        act_out,
    }
}

fn down_infer(conv: &ConvParams, x: &Array3<f64>) -> Array3<f64> {
    relu(&instance_norm(&conv.forward(x), NORM_EPS))
}

fn down_backward(
    conv: &ConvParams,
    conv_in: &Array3<f64>,
    acts: &DownActs,
    gy: &Array3<f64>,
    grads: &mut ConvParams,
) -> Array3<f64> {
    let g = relu_backward(&acts.norm_out, gy);
    let g = instance_norm_backward(&acts.conv_out, &g, NORM_EPS);
    conv.backward(conv_in, &g, grads)
}

pub(crate) fn res_conv_forward(
    conv: &ConvParams,
    x: &Array3<f64>,
    pad_mode: PadMode,
) -> ResConvActs {
    match pad_mode {
        PadMode::Zero => ResConvActs {
            padded: None,
            conv_out: conv.forward(x),
        },
        PadMode::Reflect => {
            let padded = reflect_pad(x, 1);
            let conv_out = conv.forward(&padded);
            ResConvActs {
                padded: Some(padded),
                conv_out,
            }
        }
    }
}

pub(crate) fn res_conv_infer(conv: &ConvParams, x: &Array3<f64>, pad_mode: PadMode) -> Array3<f64> {
    match pad_mode {
        PadMode::Zero => conv.forward(x),
        PadMode::Reflect => conv.forward(&reflect_pad(x, 1)),
    }
}

pub(crate) fn res_conv_backward(
    conv: &ConvParams,
    x: &Array3<f64>,
    acts: &ResConvActs,
    gy: &Array3<f64>,
    grads: &mut ConvParams,
) -> Array3<f64> {
    match &acts.padded {
        None => conv.backward(x, gy, grads),
        Some(padded) => {
            let (_, h, w) = x.dim();
            let g = conv.backward(padded, gy, grads);
            reflect_pad_backward(&g, 1, h, w)
        }
    }
}

impl SreParams {
    pub fn init<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let (b, m, f) = (cfg.base(), cfg.mid(), cfg.feat());
        Self {
            stem: init::conv(rng, b, 1, 7, 1, 3),
            down1: init::conv(rng, m, b, 4, 2, 1),
            down2: init::conv(rng, f, m, 4, 2, 1),
            res: (0..RES_BLOCKS)
                .map(|_| ResBlockParams::init(rng, f, cfg.pad_mode))
                .collect(),
            pad_mode: cfg.pad_mode,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            stem: self.stem.zeros_like(),
            down1: self.down1.zeros_like(),
            down2: self.down2.zeros_like(),
            res: self.res.iter().map(ResBlockParams::zeros_like).collect(),
            pad_mode: self.pad_mode,
        }
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (c, h, w) = x.dim();
        if c != 1 {
            return Err(Error::shape(
                "sre_forward",
                format!("expected a single-channel slice, got {c} channels"),
            ));
        }
        if h < 8 || h % 4 != 0 || w < 8 || w % 4 != 0 {
            return Err(Error::shape(
                "sre_forward",
                format!("resolution {h}x{w} not divisible by the two stride-2 stages"),
            ));
        }
        Ok(())
    }

    fn res_block_forward(&self, block: &ResBlockParams, x: &Array3<f64>) -> ResBlockActs {
        let c1 = res_conv_forward(&block.conv1, x, self.pad_mode);
        let n1 = instance_norm(&c1.conv_out, NORM_EPS);
        let a1 = relu(&n1);
        let c2 = res_conv_forward(&block.conv2, &a1, self.pad_mode);
        let n2 = instance_norm(&c2.conv_out, NORM_EPS);
        let out = x + &n2;
        ResBlockActs { c1, n1, a1, c2, out }
    }

    /// Inference path: no activation caching.
    pub fn infer(&self, x: &Array3<f64>) -> Result<FeatureMap> {
        self.check_input(x)?;
        let mut h = down_infer(&self.stem, x);
        h = down_infer(&self.down1, &h);
        h = down_infer(&self.down2, &h);
        for block in &self.res {
            let a1 = relu(&instance_norm(
                &res_conv_infer(&block.conv1, &h, self.pad_mode),
                NORM_EPS,
            ));
            let n2 = instance_norm(&res_conv_infer(&block.conv2, &a1, self.pad_mode), NORM_EPS);
            h += &n2;
        }
        Ok(h)
    }

    /// Training path: returns the shared feature and cached activations.
    pub fn forward(&self, x: &Array3<f64>) -> Result<(FeatureMap, SreActs)> {
        self.check_input(x)?;
        let stem = down_forward(&self.stem, x);
        let down1 = down_forward(&self.down1, &stem.act_out);
        let down2 = down_forward(&self.down2, &down1.act_out);
        let mut res = Vec::with_capacity(self.res.len());
        let mut cur = down2.act_out.clone();
        for block in &self.res {
            let acts = self.res_block_forward(block, &cur);
            cur = acts.out.clone();
            res.push(acts);
        }
        Ok((
            cur,
            SreActs {
                input: x.clone(),
                stem,
                down1,
                down2,
                res,
            },
        ))
    }

    /// Backward through the encoder; parameter gradients accumulate into
    /// `grads`, the input-slice gradient is returned.
    pub fn backward(&self, acts: &SreActs, gy: &FeatureMap, grads: &mut SreParams) -> Array3<f64> {
        let mut g = gy.clone();
        for (k, block) in self.res.iter().enumerate().rev() {
            let a = &acts.res[k];
            let block_in = if k == 0 {
                &acts.down2.act_out
            } else {
                &acts.res[k - 1].out
            };
            // out = x + IN(conv2(relu(IN(conv1(x)))))
            let g_n2 = instance_norm_backward(&a.c2.conv_out, &g, NORM_EPS);
            let g_a1 = res_conv_backward(&block.conv2, &a.a1, &a.c2, &g_n2, &mut grads.res[k].conv2);
            let g_n1 = relu_backward(&a.n1, &g_a1);
            let g_c1 = instance_norm_backward(&a.c1.conv_out, &g_n1, NORM_EPS);
            let g_in = res_conv_backward(&block.conv1, block_in, &a.c1, &g_c1, &mut grads.res[k].conv1);
            g += &g_in; // skip connection
        }
        let g = down_backward(&self.down2, &acts.down1.act_out, &acts.down2, &g, &mut grads.down2);
        let g = down_backward(&self.down1, &acts.stem.act_out, &acts.down1, &g, &mut grads.down1);
        down_backward(&self.stem, &acts.input, &acts.stem, &g, &mut grads.stem)
    }
}

impl ParamTensors for SreParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.stem.for_each_tensor(&mut |n, t| f(&format!("stem.{n}"), t));
        self.down1.for_each_tensor(&mut |n, t| f(&format!("down1.{n}"), t));
        self.down2.for_each_tensor(&mut |n, t| f(&format!("down2.{n}"), t));
        for (i, block) in self.res.iter().enumerate() {
            block.conv1.for_each_tensor(&mut |n, t| f(&format!("res{i}.conv1.{n}"), t));
            block.conv2.for_each_tensor(&mut |n, t| f(&format!("res{i}.conv2.{n}"), t));
        }
    }

    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.stem.for_each_tensor_mut(&mut |n, t| f(&format!("stem.{n}"), t));
        self.down1.for_each_tensor_mut(&mut |n, t| f(&format!("down1.{n}"), t));
        self.down2.for_each_tensor_mut(&mut |n, t| f(&format!("down2.{n}"), t));
        for (i, block) in self.res.iter_mut().enumerate() {
            block.conv1.for_each_tensor_mut(&mut |n, t| f(&format!("res{i}.conv1.{n}"), t));
            block.conv2.for_each_tensor_mut(&mut |n, t| f(&format!("res{i}.conv2.{n}"), t));
        }
    }
}
