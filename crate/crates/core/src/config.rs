//! Key-value run configuration files.
//!
//! One `key = value` pair per line, `#` comments, unknown or duplicate
//! keys rejected. Defaults follow the training protocol (200 epochs,
//! batch 3, lr 2e-4 decaying after epoch 100, λ₁ = λ₂ = 0.1, 256×256
//! slices, LAF block 128).
//!
//! Schema:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `modalities`        | ordered source modalities, comma separated | `T1,T2` |
//! | `target`            | synthesized modality                        | `FLAIR` |
//! | `image_size`        | square slice resolution                     | `256` |
//! | `laf_block_size`    | LAF grid cell side                          | `128` |
//! | `width_scale`       | channel multiplier, e.g. `1/4`              | `1` |
//! | `lambda1`           | synthesized-target L1 weight                | `0.1` |
//! | `lambda2`           | pseudo-target L1 weight                     | `0.1` |
//! | `lr`                | base learning rate                          | `0.0002` |
//! | `epochs`            | training epochs                             | `200` |
//! | `decay_start_epoch` | last epoch at the base rate                 | `100` |
//! | `batch_size`        | slices per step                             | `3` |
//! | `seed`              | RNG seed (falls back to `$MODSYNTH_SEED`)   | `42` |
//! | `manifest`          | dataset manifest path (relative to config)  | — |
//! | `out_dir`           | output directory                            | `out` |
//! | `checkpoint_every`  | checkpoint cadence in epochs (0 = final)    | `50` |
//! | `keep_slices`       | middle slices kept per subject              | `80` |
//! | `train_count`       | subjects in the training cohort             | 80% |
//! | `per_layer_style`   | style pair per AdaIN layer                  | `false` |
//! | `pad_mode`          | residual-block padding: `zero`/`reflect`    | `zero` |

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::Modality;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::networks::{GeneratorConfig, PadMode, WidthScale};
use crate::training::TrainConfig;

pub const SEED_ENV_VAR: &str = "MODSYNTH_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub sources: Vec<Modality>,
    pub target: Modality,
    pub image_size: usize,
    pub laf_block_size: usize,
    pub width_scale: WidthScale,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub decay_start_epoch: usize,
    pub batch_size: usize,
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint_every: usize,
    pub keep_slices: usize,
    pub train_count: Option<usize>,
    pub per_layer_style: bool,
    pub pad_mode: PadMode,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            sources: vec![Modality::T1, Modality::T2],
            target: Modality::Flair,
            image_size: 256,
            laf_block_size: 128,
            width_scale: WidthScale::FULL,
            lambda1: 0.1,
            lambda2: 0.1,
            lr: 2e-4,
            epochs: 200,
            decay_start_epoch: 100,
            batch_size: 3,
            seed: None,
            manifest: None,
            out_dir: PathBuf::from("out"),
            checkpoint_every: 50,
            keep_slices: 80,
            train_count: None,
            per_layer_style: false,
            pad_mode: PadMode::Zero,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("key {key}: expected bool, got {other:?}"))),
    }
}

impl CliConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parse config text; relative `manifest` paths resolve against
    /// `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = CliConfig::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
            match key {
                "modalities" => {
                    cfg.sources = value
                        .split(',')
                        .map(Modality::from_str)
                        .collect::<Result<Vec<_>>>()?;
                    if cfg.sources.is_empty() {
                        return Err(Error::Config("modalities list is empty".into()));
                    }
                }
                "target" => cfg.target = Modality::from_str(value)?,
                "image_size" => cfg.image_size = parse_num(key, value)?,
                "laf_block_size" => cfg.laf_block_size = parse_num(key, value)?,
                "width_scale" => cfg.width_scale = WidthScale::parse(value)?,
                "lambda1" => cfg.lambda1 = parse_num(key, value)?,
                "lambda2" => cfg.lambda2 = parse_num(key, value)?,
                "lr" => cfg.lr = parse_num(key, value)?,
                "epochs" => cfg.epochs = parse_num(key, value)?,
                "decay_start_epoch" => cfg.decay_start_epoch = parse_num(key, value)?,
                "batch_size" => cfg.batch_size = parse_num(key, value)?,
                "seed" => cfg.seed = Some(parse_num(key, value)?),
                "manifest" => cfg.manifest = Some(base_dir.join(value)),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "checkpoint_every" => cfg.checkpoint_every = parse_num(key, value)?,
                "keep_slices" => cfg.keep_slices = parse_num(key, value)?,
                "train_count" => cfg.train_count = Some(parse_num(key, value)?),
                "per_layer_style" => cfg.per_layer_style = parse_bool(key, value)?,
                "pad_mode" => {
                    cfg.pad_mode = match value {
                        "zero" => PadMode::Zero,
                        "reflect" => PadMode::Reflect,
                        other => {
                            return Err(Error::Config(format!(
                                "pad_mode must be zero or reflect, got {other:?}"
                            )))
                        }
                    }
                }
                unknown => {
                    return Err(Error::Config(format!("unknown config key {unknown:?}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.contains(&self.target) {
            return Err(Error::Config(format!(
                "target {} also appears in modalities",
                self.target
            )));
        }
        let mut unique = BTreeSet::new();
        for m in &self.sources {
            if !unique.insert(m) {
                return Err(Error::Config(format!("duplicate source modality {m}")));
            }
        }
        self.generator_config().validate()?;
        self.train_config().validate()
    }

    /// Seed resolution order: config key, then `$MODSYNTH_SEED`, then 42.
    pub fn resolve_seed(&self) -> u64 {
        if let Some(seed) = self.seed {
            return seed;
        }
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            if let Ok(seed) = v.parse() {
                return seed;
            }
        }
        42
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            modality_count: self.sources.len(),
            image_size: self.image_size,
            laf_block_size: self.laf_block_size,
            width_scale: self.width_scale,
            per_layer_style: self.per_layer_style,
            pad_mode: self.pad_mode,
            ..Default::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.lr,
            decay_start_epoch: self.decay_start_epoch.min(self.epochs),
            weights: LossWeights {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
            },
            seed: self.resolve_seed(),
            checkpoint_every: self.checkpoint_every,
            out_dir: self.out_dir.clone(),
            device: "cpu".into(),
        }
    }
}
