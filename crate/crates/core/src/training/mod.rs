//! Alternating adversarial training: one discriminator update on a
//! detached fake, then one generator update (through the refreshed
//! discriminator), per batch. Adam for both networks, constant-then-linear
//! learning-rate decay, JSONL epoch logging and periodic checkpoints.

mod adam;
mod run_manifest;
mod schedule;

pub use adam::Adam;
pub use run_manifest::{EpochRecord, RunManifest};
pub use schedule::lr_schedule;

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{s, Array1, Array3, Array4, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SliceSample;
use crate::error::{Error, Result};
use crate::losses::{
    discriminator_loss, discriminator_loss_grad, generator_adversarial_loss_grad, l1_grad,
    total_generator_loss, LossWeights,
};
use crate::metrics::{evaluate_pair, MetricReport, SliceMetrics};
use crate::networks::{
    save_checkpoint, DiscriminatorParams, GeneratorConfig, GeneratorParams,
};
use crate::nn::ParamTensors;

pub const ADAM_BETA1: f64 = 0.5;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_start_epoch: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Checkpoint every N epochs (0 = final epoch only).
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    /// Informational hint recorded in the manifest; all compute is CPU.
    pub device: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 3,
            base_lr: 2e-4,
            decay_start_epoch: 100,
            weights: LossWeights::default(),
            seed: 42,
            checkpoint_every: 50,
            out_dir: PathBuf::from("runs/default"),
            device: "cpu".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.decay_start_epoch > self.epochs {
            return Err(Error::Config(format!(
                "decay_start_epoch {} exceeds epochs {}",
                self.decay_start_epoch, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.base_lr < 0.0 || self.weights.lambda1 < 0.0 || self.weights.lambda2 < 0.0 {
            return Err(Error::Config("rates and loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Losses observed in one step plus whether each update was applied
/// (non-finite losses abort the corresponding update).
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub loss_d: f64,
    pub loss_g: f64,
    pub d_updated: bool,
    pub g_updated: bool,
}

/// Stack sources + per-sample target channel into a `(N, M+1, S, S)`
/// discriminator input.
fn disc_input(batch: &[&SliceSample], targets: &[Array3<f64>]) -> Array4<f64> {
    let n = batch.len();
    let m = batch[0].sources.len();
    let (h, w) = batch[0].sources[0].dim();
    let mut out = Array4::<f64>::zeros((n, m + 1, h, w));
    for (i, sample) in batch.iter().enumerate() {
        for (c, src) in sample.sources.iter().enumerate() {
            out.slice_mut(s![i, c, .., ..]).assign(src);
        }
        out.slice_mut(s![i, m, .., ..])
            .assign(&targets[i].index_axis(Axis(0), 0));
    }
    out
}

/// One alternating update: D first (fake detached), then G with D fixed.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    batch: &[&SliceSample],
    gen: &mut GeneratorParams,
    disc: &mut DiscriminatorParams,
    weights: &LossWeights,
    opt_g: &mut Adam,
    opt_d: &mut Adam,
    lr: f64,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let n = batch.len();
    let m = gen.config.modality_count;

    let forward: Vec<_> = batch
        .par_iter()
        .map(|sample| gen.forward(&sample.stacked_sources()))
        .collect::<Result<Vec<_>>>()?;
    let real_targets: Vec<Array3<f64>> = batch.iter().map(|sample| sample.target3()).collect();
    let fake_targets: Vec<Array3<f64>> =
        forward.iter().map(|(out, _)| out.synthesized.clone()).collect();

    let real_in = disc_input(batch, &real_targets);
    let fake_in = disc_input(batch, &fake_targets);

    // --- discriminator update (generator fixed, fake detached) ---
    let (p_real, acts_real) = disc.forward(&real_in)?;
    let (p_fake, acts_fake) = disc.forward(&fake_in)?;
    let loss_d = (0..n)
        .map(|i| discriminator_loss(p_real[i], p_fake[i]))
        .sum::<f64>()
        / n as f64;
    let mut d_updated = false;
    if loss_d.is_finite() {
        let mut d_grads = disc.zeros_like();
        let g_real = Array1::from_shape_fn(n, |i| {
            discriminator_loss_grad(p_real[i], p_fake[i]).0 / n as f64
        });
        let g_fake = Array1::from_shape_fn(n, |i| {
            discriminator_loss_grad(p_real[i], p_fake[i]).1 / n as f64
        });
        disc.backward(&acts_real, &g_real, &mut d_grads);
        disc.backward(&acts_fake, &g_fake, &mut d_grads);
        opt_d.step(disc, &d_grads, lr);
        d_updated = true;
    }

    // --- generator update (discriminator fixed at its new state) ---
    let (p_fake2, acts_fake2) = disc.forward(&fake_in)?;
    let mut loss_g = 0.0;
    for (i, (out, _)) in forward.iter().enumerate() {
        loss_g +=
            total_generator_loss(p_fake2[i], &real_targets[i], &out.synthesized, &out.pseudo, weights)?;
    }
    loss_g /= n as f64;
    let mut g_updated = false;
    if loss_g.is_finite() {
        // adversarial route: probability gradients through D into the fake
        // target channel; D parameter gradients go to a discarded scratch
        let g_probs =
            Array1::from_shape_fn(n, |i| generator_adversarial_loss_grad(p_fake2[i]) / n as f64);
        let mut d_scratch = disc.zeros_like();
        let g_disc_input = disc.backward(&acts_fake2, &g_probs, &mut d_scratch);

        let inv_n = 1.0 / n as f64;
        let per_sample: Vec<GeneratorParams> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (out, acts) = &forward[i];
                let mut g_synth = g_disc_input
                    .slice(s![i, m..m + 1, .., ..])
                    .to_owned()
                    .into_shape_with_order(out.synthesized.dim())
                    .unwrap();
                g_synth += &l1_grad(&real_targets[i], &out.synthesized, weights.lambda1 * inv_n);
                let g_pseudo = l1_grad(&real_targets[i], &out.pseudo, weights.lambda2 * inv_n);
                let mut grads = gen.zeros_like();
                gen.backward(acts, &g_synth, &g_pseudo, &mut grads)?;
                Ok(grads)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = gen.zeros_like();
        for grads in &per_sample {
            accumulate(&mut total, grads);
        }
        opt_g.step(gen, &total, lr);
        g_updated = true;
    }

    Ok(StepReport {
        loss_d,
        loss_g,
        d_updated,
        g_updated,
    })
}

/// Elementwise `dst += src` over matching parameter structures.
fn accumulate<P: ParamTensors>(dst: &mut P, src: &P) {
    let flat = src.to_flat();
    let mut ti = 0usize;
    dst.for_each_tensor_mut(&mut |_, t| {
        let s = &flat[ti];
        debug_assert_eq!(t.len(), s.len());
        for (a, b) in t.iter_mut().zip(s.iter()) {
            *a += b;
        }
        ti += 1;
    });
}

/// Evaluate a generator on `[0, 1]`-rescaled targets.
pub fn evaluate_generator(
    gen: &GeneratorParams,
    samples: &[SliceSample],
) -> Result<MetricReport> {
    let slices: Vec<SliceMetrics> = samples
        .par_iter()
        .map(|sample| {
            let out = gen.infer(&sample.stacked_sources())?;
            let synth01 = out
                .synthesized
                .index_axis(Axis(0), 0)
                .mapv(|v| (v + 1.0) / 2.0);
            let real01 = sample.target.mapv(|v| (v + 1.0) / 2.0);
            let (psnr, ssim, nrmse) = evaluate_pair(&real01, &synth01)?;
            Ok(SliceMetrics {
                subject_id: sample.subject_id.clone(),
                slice_index: sample.slice_index,
                psnr,
                ssim,
                nrmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::new(slices))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub manifest: RunManifest,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
}

/// Full training run over pre-extracted slice samples. Deterministic under
/// the config seed: initialization, batch order and every update depend
/// only on `(config, dataset)`.
pub fn train(
    cfg: &TrainConfig,
    gen_cfg: &GeneratorConfig,
    train_set: &[SliceSample],
    val_set: &[SliceSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    gen_cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    for sample in train_set.iter().take(1).chain(val_set.iter().take(1)) {
        if sample.sources.len() != gen_cfg.modality_count {
            return Err(Error::Data(format!(
                "dataset provides {} sources, config wants {}",
                sample.sources.len(),
                gen_cfg.modality_count
            )));
        }
        let (h, w) = sample.sources[0].dim();
        if (h, w) != (gen_cfg.image_size, gen_cfg.image_size) {
            return Err(Error::Data(format!(
                "dataset slices are {h}x{w}, config wants {0}x{0}",
                gen_cfg.image_size
            )));
        }
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let log_path = cfg.out_dir.join("run_log.jsonl");
    // fresh log per run
    std::fs::write(&log_path, "").map_err(|e| Error::io(&log_path, e))?;

    use rand::SeedableRng;
    let mut init_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gen = GeneratorParams::init(gen_cfg, &mut init_rng)?;
    let mut disc = DiscriminatorParams::init(gen_cfg, &mut init_rng);
    let mut opt_g = Adam::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
    let mut opt_d = Adam::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
    let mut manifest = RunManifest::new(cfg, gen_cfg);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = lr_schedule(epoch, cfg)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        {
            use rand::seq::SliceRandom;
            let mut epoch_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
            epoch_rng.set_stream(10_000 + epoch as u64);
            order.shuffle(&mut epoch_rng);
        }
        let mut loss_d_sum = 0.0;
        let mut loss_g_sum = 0.0;
        let mut steps = 0usize;
        let mut skipped = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SliceSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let report = train_step(&batch, &mut gen, &mut disc, &cfg.weights, &mut opt_g, &mut opt_d, lr)?;
            loss_d_sum += report.loss_d;
            loss_g_sum += report.loss_g;
            steps += 1;
            if !report.d_updated || !report.g_updated {
                skipped += 1;
                eprintln!(
                    "warning: epoch {epoch}: non-finite loss, skipped update (d={}, g={})",
                    report.d_updated, report.g_updated
                );
            }
        }

        let (val_psnr, val_ssim, val_nrmse) = if val_set.is_empty() {
            (None, None, None)
        } else {
            let report = evaluate_generator(&gen, val_set)?;
            (
                Some(report.psnr_stats().mean),
                Some(report.ssim_stats().mean),
                Some(report.nrmse_stats().mean),
            )
        };

        manifest.append_epoch(
            &log_path,
            EpochRecord {
                epoch,
                lr,
                loss_d: loss_d_sum / steps.max(1) as f64,
                loss_g: loss_g_sum / steps.max(1) as f64,
                skipped_steps: skipped,
                val_psnr,
                val_ssim,
                val_nrmse,
                wall_secs: started.elapsed().as_secs_f64(),
            },
        )?;

        let is_cadence = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        if is_cadence || epoch == cfg.epochs {
            let path = cfg.out_dir.join(format!("epoch_{epoch}.ckpt"));
            save_checkpoint(&path, cfg.seed, epoch as u32, &gen, &disc)?;
            manifest.checkpoints.push(path);
        }
    }

    manifest.write_summary(&cfg.out_dir.join("summary.json"))?;
    Ok(TrainOutcome {
        manifest,
        generator: gen,
        discriminator: disc,
    })
}
