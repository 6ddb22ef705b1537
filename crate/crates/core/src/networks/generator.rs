//! Full generator: M shared encoders → Cat-Conv fusion on one path, LAF →
//! specific encoder on the other, recombined by the AdaIN decoder. Returns
//! both the synthesized target and the LAF pseudo-target; the pseudo-target
//! participates in the loss directly (its own L1 term) and indirectly
//! through the style statistics, so gradients flow into the LAF kernels
//! from both routes.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::blocks::{
    cat_conv_backward, cat_conv_forward, laf_backward, laf_forward, FeatureMap, LafParams,
    StyleStats,
};
use crate::error::{Error, Result};
use crate::nn::{init, ConvParams, ParamTensors};

use super::decoder::{DecoderActs, DecoderParams};
use super::spe::{SpeActs, SpeParams};
use super::sre::{SreActs, SreParams};
use super::GeneratorConfig;

#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    pub sres: Vec<SreParams>,
    pub laf: LafParams,
    pub spe: SpeParams,
    pub cat_conv: ConvParams,
    pub decoder: DecoderParams,
}

/// Synthesized target and pseudo-target, both `(1, S, S)` in `[-1, 1]`
/// (the pseudo-target is an affine fusion of `[-1, 1]` inputs, so it can
/// exceed the range slightly early in training).
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub synthesized: Array3<f64>,
    pub pseudo: Array3<f64>,
}

pub struct GeneratorActs {
    pub(crate) sources: Array3<f64>,
    pub(crate) sre: Vec<SreActs>,
    pub(crate) feats: Vec<FeatureMap>,
    pub(crate) spe: SpeActs,
    pub(crate) style: Vec<StyleStats>,
    pub(crate) dec: DecoderActs,
}

fn modality_slice(sources: &Array3<f64>, m: usize) -> Array3<f64> {
    sources.index_axis(Axis(0), m).to_owned().insert_axis(Axis(0))
}

impl GeneratorParams {
    pub fn init<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sres = (0..config.modality_count)
            .map(|_| SreParams::init(config, rng))
            .collect();
        let (rows, cols) = config.laf_grid();
        let laf = LafParams::mean_init(rows, cols, config.modality_count);
        let spe = SpeParams::init(config, rng);
        let cat_conv = init::conv(
            rng,
            config.feat(),
            config.feat() * config.modality_count,
            3,
            1,
            1,
        );
        let decoder = DecoderParams::init(config, rng);
        Ok(Self {
            config: config.clone(),
            sres,
            laf,
            spe,
            cat_conv,
            decoder,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            sres: self.sres.iter().map(SreParams::zeros_like).collect(),
            laf: self.laf.zeros_like(),
            spe: self.spe.zeros_like(),
            cat_conv: self.cat_conv.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    fn check_sources(&self, sources: &Array3<f64>) -> Result<()> {
        let (m, h, w) = sources.dim();
        if m != self.config.modality_count {
            return Err(Error::shape(
                "generator_forward",
                format!(
                    "{m} source slices but the generator is configured for {}",
                    self.config.modality_count
                ),
            ));
        }
        let s = self.config.image_size;
        if (h, w) != (s, s) {
            return Err(Error::shape(
                "generator_forward",
                format!("source resolution {h}x{w}, configured {s}x{s}"),
            ));
        }
        Ok(())
    }

    /// Pseudo-target produced by the LAF front end, `(S, S)`.
    pub fn pseudo_target(&self, sources: &Array3<f64>) -> Result<Array2<f64>> {
        self.check_sources(sources)?;
        laf_forward(sources, &self.laf, self.config.laf_block_size)
    }

    /// Inference path: no activation caching. Encoder branches run in
    /// parallel.
    pub fn infer(&self, sources: &Array3<f64>) -> Result<GeneratorOutput> {
        self.check_sources(sources)?;
        let feats: Vec<FeatureMap> = self
            .sres
            .par_iter()
            .enumerate()
            .map(|(m, sre)| sre.infer(&modality_slice(sources, m)))
            .collect::<Result<_>>()?;
        let pseudo = laf_forward(sources, &self.laf, self.config.laf_block_size)?;
        let pseudo3 = pseudo.insert_axis(Axis(0));
        let style = self.spe.infer(&pseudo3)?;
        let fused = cat_conv_forward(&feats, &self.cat_conv)?;
        let synthesized = self.decoder.infer(&fused, &style)?;
        Ok(GeneratorOutput {
            synthesized,
            pseudo: pseudo3,
        })
    }

    /// Training path: returns outputs and every cached activation.
    pub fn forward(&self, sources: &Array3<f64>) -> Result<(GeneratorOutput, GeneratorActs)> {
        self.check_sources(sources)?;
        let branches: Vec<(FeatureMap, SreActs)> = self
            .sres
            .par_iter()
            .enumerate()
            .map(|(m, sre)| sre.forward(&modality_slice(sources, m)))
            .collect::<Result<_>>()?;
        let mut feats = Vec::with_capacity(branches.len());
        let mut sre_acts = Vec::with_capacity(branches.len());
        for (f, a) in branches {
            feats.push(f);
            sre_acts.push(a);
        }
        let pseudo = laf_forward(sources, &self.laf, self.config.laf_block_size)?;
        let pseudo3 = pseudo.insert_axis(Axis(0));
        let (style, spe_acts) = self.spe.forward(&pseudo3)?;
        let fused = cat_conv_forward(&feats, &self.cat_conv)?;
        let (synthesized, dec_acts) = self.decoder.forward(&fused, &style)?;
        Ok((
            GeneratorOutput {
                synthesized,
                pseudo: pseudo3,
            },
            GeneratorActs {
                sources: sources.clone(),
                sre: sre_acts,
                feats,
                spe: spe_acts,
                style,
                dec: dec_acts,
            },
        ))
    }

    /// Backward pass. `g_synth` is the loss gradient w.r.t. the synthesized
    /// image and `g_pseudo` the direct loss gradient w.r.t. the
    /// pseudo-target (the style route adds its own contribution here).
    /// Returns the gradient w.r.t. the stacked sources.
    pub fn backward(
        &self,
        acts: &GeneratorActs,
        g_synth: &Array3<f64>,
        g_pseudo: &Array3<f64>,
        grads: &mut GeneratorParams,
    ) -> Result<Array3<f64>> {
        let (g_fused, g_style) =
            self.decoder
                .backward(&acts.style, &acts.dec, g_synth, &mut grads.decoder);
        let g_feats = cat_conv_backward(&acts.feats, &self.cat_conv, &g_fused, &mut grads.cat_conv)?;

        let g_sources_per_branch: Vec<Array3<f64>> = self
            .sres
            .par_iter()
            .zip(grads.sres.par_iter_mut())
            .enumerate()
            .map(|(m, (sre, g_sre))| sre.backward(&acts.sre[m], &g_feats[m], g_sre))
            .collect();

        let g_pseudo_style = self.spe.backward(&acts.spe, &g_style, &mut grads.spe);
        let g_pseudo_total =
            g_pseudo_style.index_axis(Axis(0), 0).to_owned() + g_pseudo.index_axis(Axis(0), 0);
        let mut g_sources = laf_backward(
            &acts.sources,
            &self.laf,
            self.config.laf_block_size,
            &g_pseudo_total,
            &mut grads.laf,
        )?;
        for (m, g) in g_sources_per_branch.iter().enumerate() {
            let mut lane = g_sources.index_axis_mut(Axis(0), m);
            lane += &g.index_axis(Axis(0), 0);
        }
        Ok(g_sources)
    }

    /// Component boundaries in [`ParamTensors`] visit order, as
    /// `(component name, parameter count)` pairs.
    pub fn component_sizes(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (i, sre) in self.sres.iter().enumerate() {
            out.push((format!("sre{i}"), sre.param_count()));
        }
        out.push(("laf".into(), self.laf.param_count()));
        out.push(("spe".into(), ParamTensors::param_count(&self.spe)));
        out.push(("cat_conv".into(), ParamTensors::param_count(&self.cat_conv)));
        out.push(("decoder".into(), ParamTensors::param_count(&self.decoder)));
        out
    }
}

impl ParamTensors for GeneratorParams {
    fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, sre) in self.sres.iter().enumerate() {
            sre.for_each_tensor(&mut |n, t| f(&format!("sre{i}.{n}"), t));
        }
        self.laf.for_each_tensor(&mut |n, t| f(&format!("laf.{n}"), t));
        self.spe.for_each_tensor(&mut |n, t| f(&format!("spe.{n}"), t));
        self.cat_conv.for_each_tensor(&mut |n, t| f(&format!("cat_conv.{n}"), t));
        self.decoder.for_each_tensor(&mut |n, t| f(&format!("decoder.{n}"), t));
    }

    fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, sre) in self.sres.iter_mut().enumerate() {
            sre.for_each_tensor_mut(&mut |n, t| f(&format!("sre{i}.{n}"), t));
        }
        self.laf.for_each_tensor_mut(&mut |n, t| f(&format!("laf.{n}"), t));
        self.spe.for_each_tensor_mut(&mut |n, t| f(&format!("spe.{n}"), t));
        self.cat_conv.for_each_tensor_mut(&mut |n, t| f(&format!("cat_conv.{n}"), t));
        self.decoder.for_each_tensor_mut(&mut |n, t| f(&format!("decoder.{n}"), t));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::WidthScale;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_cfg(m: usize) -> GeneratorConfig {
        GeneratorConfig {
            modality_count: m,
            image_size: 32,
            laf_block_size: 16,
            width_scale: WidthScale::QUARTER,
            ..Default::default()
        }
    }

    fn sources(m: usize, s: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((m, s, s), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn end_to_end_shapes_for_one_two_three_modalities() {
        for m in 1..=3 {
            let cfg = desk_cfg(m);
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let gen = GeneratorParams::init(&cfg, &mut rng).unwrap();
            let out = gen.infer(&sources(m, 32, 9)).unwrap();
            assert_eq!(out.synthesized.dim(), (1, 32, 32));
            assert_eq!(out.pseudo.dim(), (1, 32, 32));
            assert!(out.synthesized.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn modality_count_mismatch_rejected() {
        let cfg = desk_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gen = GeneratorParams::init(&cfg, &mut rng).unwrap();
        assert!(gen.infer(&sources(3, 32, 2)).is_err());
        assert!(gen.infer(&sources(2, 16, 3)).is_err());
    }

    #[test]
    fn repeated_forward_is_bit_identical() {
        let cfg = desk_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gen = GeneratorParams::init(&cfg, &mut rng).unwrap();
        let x = sources(2, 32, 11);
        let a = gen.infer(&x).unwrap();
        let b = gen.infer(&x).unwrap();
        assert_eq!(a.synthesized, b.synthesized);
        assert_eq!(a.pseudo, b.pseudo);
    }

    #[test]
    fn same_seed_same_params() {
        let cfg = desk_cfg(2);
        let a = GeneratorParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = GeneratorParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let x = sources(2, 32, 4);
        assert_eq!(a.infer(&x).unwrap().synthesized, b.infer(&x).unwrap().synthesized);
    }

    #[test]
    fn encoders_do_not_share_weights() {
        // With identical inputs on both branches, perturbing SRE-1 changes
        // only its own feature map.
        let cfg = desk_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut gen = GeneratorParams::init(&cfg, &mut rng).unwrap();
        let one = sources(1, 32, 21);
        let mut x = Array3::zeros((2, 32, 32));
        x.index_axis_mut(Axis(0), 0).assign(&one.index_axis(Axis(0), 0));
        x.index_axis_mut(Axis(0), 1).assign(&one.index_axis(Axis(0), 0));

        let slice = modality_slice(&x, 0);
        let f0_before = gen.sres[0].infer(&slice).unwrap();
        let f1_before = gen.sres[1].infer(&slice).unwrap();
        gen.sres[1].stem.weight[[0, 0, 3, 3]] += 0.25;
        let f0_after = gen.sres[0].infer(&slice).unwrap();
        let f1_after = gen.sres[1].infer(&slice).unwrap();
        assert_eq!(f0_before, f0_after);
        assert!(f1_before != f1_after);
    }

    #[test]
    fn pseudo_target_starts_as_modality_mean() {
        let cfg = desk_cfg(3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gen = GeneratorParams::init(&cfg, &mut rng).unwrap();
        let x = sources(3, 32, 6);
        let pseudo = gen.pseudo_target(&x).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        for (a, b) in pseudo.iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn visit_order_matches_component_sizes() {
        let cfg = desk_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let gen = GeneratorParams::init(&cfg, &mut rng).unwrap();
        let total: usize = gen.component_sizes().iter().map(|(_, n)| n).sum();
        assert_eq!(total, gen.param_count());
    }
}
