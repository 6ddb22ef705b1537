//! Network assembly: per-modality shared encoders, the specific encoder fed
//! by the LAF pseudo-target, Cat-Conv fusion, the AdaIN decoder, and the
//! discriminator. Forward passes come in two flavours per component: a
//! lean inference path and a training path that retains the activations
//! needed by the analytic backward pass.

mod checkpoint;
mod decoder;
mod discriminator;
mod generator;
mod spe;
mod sre;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use decoder::{AdainResParams, DecoderParams};
pub use discriminator::{DiscriminatorActs, DiscriminatorParams};
pub use generator::{GeneratorActs, GeneratorOutput, GeneratorParams};
pub use spe::SpeParams;
pub use sre::SreParams;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Padding flavour used inside residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    #[default]
    Zero,
    Reflect,
}

/// Rational channel-width multiplier for desk-scale configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthScale {
    pub num: u32,
    pub den: u32,
}

impl WidthScale {
    pub const FULL: WidthScale = WidthScale { num: 1, den: 1 };
    pub const QUARTER: WidthScale = WidthScale { num: 1, den: 4 };

    pub fn apply(&self, channels: usize) -> usize {
        (channels * self.num as usize / self.den as usize).max(1)
    }

    fn divides(&self, channels: usize) -> bool {
        (channels * self.num as usize) % self.den as usize == 0
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num: u32 = num
            .parse()
            .map_err(|_| Error::Config(format!("bad width_scale numerator in {s:?}")))?;
        let den: u32 = den
            .parse()
            .map_err(|_| Error::Config(format!("bad width_scale denominator in {s:?}")))?;
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("width_scale must be positive: {s:?}")));
        }
        Ok(WidthScale { num, den })
    }
}

impl std::fmt::Display for WidthScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Default for WidthScale {
    fn default() -> Self {
        WidthScale::FULL
    }
}

/// Everything needed to build a generator (and the matching discriminator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Number of source modalities M (1..=4).
    pub modality_count: usize,
    /// Square slice resolution.
    pub image_size: usize,
    /// Stem width before scaling (encoder channel progression is
    /// `base → 2·base → feature`).
    pub base_channels: usize,
    /// Shared-feature width before scaling.
    pub feature_channels: usize,
    /// Side length of LAF grid cells.
    pub laf_block_size: usize,
    pub width_scale: WidthScale,
    /// Emit one style pair per decoder AdaIN layer instead of a single
    /// shared pair.
    pub per_layer_style: bool,
    pub pad_mode: PadMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            modality_count: 2,
            image_size: 256,
            base_channels: 64,
            feature_channels: 256,
            laf_block_size: 128,
            width_scale: WidthScale::FULL,
            per_layer_style: false,
            pad_mode: PadMode::Zero,
        }
    }
}

/// Residual blocks in both the encoder and the decoder.
pub const RES_BLOCKS: usize = 4;
/// AdaIN applications in the decoder (two per residual block).
pub const ADAIN_LAYERS: usize = 2 * RES_BLOCKS;
/// Style-code bottleneck width in the specific encoder.
pub const STYLE_CODE_DIM: usize = 8;
/// Discriminator depth.
pub const DISC_BLOCKS: usize = 5;
/// Negative slope of the discriminator's LeakyReLU activations.
pub const LEAKY_SLOPE: f64 = 0.2;

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.modality_count) {
            return Err(Error::Config(format!(
                "modality_count must be 1..=4, got {}",
                self.modality_count
            )));
        }
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return Err(Error::Config(format!(
                "image_size must be a multiple of 4 (>= 8), got {}",
                self.image_size
            )));
        }
        if self.laf_block_size == 0 || self.image_size % self.laf_block_size != 0 {
            return Err(Error::Config(format!(
                "image_size {} not divisible by laf_block_size {}",
                self.image_size, self.laf_block_size
            )));
        }
        for (name, c) in [
            ("base_channels", self.base_channels),
            ("base_channels*2", self.base_channels * 2),
            ("feature_channels", self.feature_channels),
        ] {
            if !self.width_scale.divides(c) {
                return Err(Error::Config(format!(
                    "width_scale {} does not divide {name} = {c}",
                    self.width_scale
                )));
            }
        }
        if self.feat() < 2 {
            return Err(Error::Config("scaled channel widths too small".into()));
        }
        Ok(())
    }

    /// Scaled stem width.
    pub fn base(&self) -> usize {
        self.width_scale.apply(self.base_channels)
    }

    /// Scaled intermediate width (second down-sampling stage).
    pub fn mid(&self) -> usize {
        self.width_scale.apply(self.base_channels * 2)
    }

    /// Scaled shared-feature width.
    pub fn feat(&self) -> usize {
        self.width_scale.apply(self.feature_channels)
    }

    /// Spatial side of the shared feature maps (two stride-2 stages).
    pub fn feature_size(&self) -> usize {
        self.image_size / 4
    }

    /// LAF grid dimensions.
    pub fn laf_grid(&self) -> (usize, usize) {
        (
            self.image_size / self.laf_block_size,
            self.image_size / self.laf_block_size,
        )
    }

    /// Number of independent style pairs produced by the specific encoder.
    pub fn style_slots(&self) -> usize {
        if self.per_layer_style {
            ADAIN_LAYERS
        } else {
            1
        }
    }

    /// Style slot consumed by AdaIN layer `layer` (0-based).
    pub fn style_slot(&self, layer: usize) -> usize {
        if self.per_layer_style {
            layer
        } else {
            0
        }
    }
}
