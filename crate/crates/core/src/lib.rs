//! Multi-modal MRI image synthesis with feature disentanglement.
//!
//! The crate splits each input modality into modality-invariant shared
//! information (per-modality shared encoders fused by Cat-Conv) and
//! modality-specific style information (a specific encoder fed by a
//! block-wise locally-adaptive fusion of the sources), then recombines both
//! in an AdaIN decoder under an adversarial + dual-L1 objective. It ships
//! the losses, image-quality metrics, slice preprocessing pipeline, a
//! procedural phantom dataset, the training loop, and sweep harnesses for
//! block-size and modality-count experiments.

pub mod ablation;
pub mod blocks;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod phantom;
pub mod training;

pub use error::{Error, Result};
