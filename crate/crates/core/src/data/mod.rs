//! Volume ingestion, slice extraction, normalization and subject-level
//! splitting.
//!
//! Volumes arrive as NIfTI-1 files (`.nii` / `.nii.gz`) or directories of
//! 16-bit grayscale PNG slices named `<index:04>.png`. The axial axis is
//! always the first axis of a volume.

mod manifest;
mod nifti;
mod png_stack;
mod resize;
mod slices;
mod split;

pub use manifest::{read_manifest, write_manifest, SubjectEntry};
pub use nifti::{read_nifti, write_nifti};
pub use png_stack::{read_png_stack, write_png_stack};
pub use resize::resize_bilinear;
pub use slices::{denormalize_slice, extract_slices, NormParams, SliceSample, SubjectSlices};
pub use split::split_subjects;

use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MRI contrast type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    T1,
    T1c,
    T2,
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::T1, Modality::T1c, Modality::T2, Modality::Flair];

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::T1 => "T1",
            Modality::T1c => "T1c",
            Modality::T2 => "T2",
            Modality::Flair => "FLAIR",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" => Ok(Modality::T1),
            "T1C" => Ok(Modality::T1c),
            "T2" => Ok(Modality::T2),
            "FLAIR" => Ok(Modality::Flair),
            other => Err(Error::Config(format!(
                "unknown modality {other:?} (expected T1, T1c, T2 or FLAIR)"
            ))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One subject's 3D scan for a single modality. Axes are `(D, H, W)` with
/// the axial direction first.
#[derive(Debug, Clone)]
pub struct ModalityVolume {
    pub subject_id: String,
    pub modality: Modality,
    pub voxels: Array3<f32>,
    /// Voxel spacing `(x, y, z)` in millimetres where known, else 1.0.
    pub spacing: [f32; 3],
}

impl ModalityVolume {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.voxels.dim()
    }
}

/// Load a volume from a NIfTI file or a PNG slice directory.
pub fn load_volume(path: &Path, subject_id: &str, modality: Modality) -> Result<ModalityVolume> {
    if path.is_dir() {
        return read_png_stack(path, subject_id, modality);
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.ends_with(".nii") || name.ends_with(".nii.gz") {
        return read_nifti(path, subject_id, modality);
    }
    Err(Error::format(
        path,
        "expected a .nii/.nii.gz file or a PNG slice directory",
    ))
}
