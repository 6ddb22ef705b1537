//! Slice extraction: exclude empty slices, keep the middle of what
//! remains, resize, and min-max normalize per subject and modality into
//! `[-1, 1]`.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{resize_bilinear, Modality, ModalityVolume};

/// Per-subject, per-modality intensity range used for normalization.
/// Constant volumes map to zero (midpoint convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

impl NormParams {
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            2.0 * (v - self.min) / (self.max - self.min) - 1.0
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            self.min + (v + 1.0) / 2.0 * (self.max - self.min)
        } else {
            self.min
        }
    }
}

/// Map a whole `[-1, 1]` slice back to intensity space.
pub fn denormalize_slice(slice: &Array2<f64>, params: &NormParams) -> Array2<f64> {
    slice.mapv(|v| params.denormalize(v))
}

/// Aligned source slices plus the target slice for one axial position,
/// everything normalized to `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct SliceSample {
    pub subject_id: String,
    /// Original axial index in the volume.
    pub slice_index: usize,
    pub sources: Vec<Array2<f64>>,
    pub target: Array2<f64>,
}

impl SliceSample {
    /// Stack the sources into the `(M, S, S)` tensor the generator takes.
    pub fn stacked_sources(&self) -> ndarray::Array3<f64> {
        let m = self.sources.len();
        let (h, w) = self.sources[0].dim();
        let mut out = ndarray::Array3::zeros((m, h, w));
        for (i, s) in self.sources.iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(s);
        }
        out
    }

    /// Target as the `(1, S, S)` tensor the losses take.
    pub fn target3(&self) -> ndarray::Array3<f64> {
        self.target.clone().insert_axis(Axis(0))
    }
}

/// Extraction result for one subject.
#[derive(Debug, Clone)]
pub struct SubjectSlices {
    pub samples: Vec<SliceSample>,
    pub norms: BTreeMap<Modality, NormParams>,
}

fn volume_range(volume: &ModalityVolume) -> NormParams {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in volume.voxels.iter() {
        let v = v as f64;
        min = min.min(v);
        max = max.max(v);
    }
    NormParams { min, max }
}

/// Extract aligned slice samples from one subject's co-registered volumes.
///
/// Slices that are entirely zero across every involved modality are
/// excluded first; the middle `keep_count` of the remaining sequence
/// (centred by count, not by index) is selected, resized to `out_size`
/// and normalized.
pub fn extract_slices(
    volumes: &[ModalityVolume],
    source_modalities: &[Modality],
    target_modality: Modality,
    keep_count: usize,
    out_size: usize,
) -> Result<SubjectSlices> {
    if source_modalities.is_empty() {
        return Err(Error::Config("no source modalities configured".into()));
    }
    if source_modalities.contains(&target_modality) {
        return Err(Error::Config(format!(
            "target modality {target_modality} is also listed as a source"
        )));
    }
    let mut by_modality: BTreeMap<Modality, &ModalityVolume> = BTreeMap::new();
    for v in volumes {
        by_modality.insert(v.modality, v);
    }
    let mut needed: Vec<Modality> = source_modalities.to_vec();
    needed.push(target_modality);

    let subject_id = volumes
        .first()
        .map(|v| v.subject_id.clone())
        .ok_or_else(|| Error::Data("no volumes given".into()))?;
    let mut dims = None;
    for m in &needed {
        let vol = by_modality.get(m).ok_or_else(|| {
            Error::Data(format!("subject {subject_id}: modality {m} missing"))
        })?;
        if vol.subject_id != subject_id {
            return Err(Error::Data(format!(
                "mixed subjects: {subject_id} and {}",
                vol.subject_id
            )));
        }
        match dims {
            None => dims = Some(vol.dims()),
            Some(d) if d != vol.dims() => {
                return Err(Error::Data(format!(
                    "subject {subject_id}: {m} has dims {:?}, expected {d:?} (volumes must be co-registered)",
                    vol.dims()
                )));
            }
            _ => {}
        }
    }
    let (depth, _, _) = dims.unwrap();

    // a slice is "empty" when its maximum voxel is 0 across all modalities
    let nonempty: Vec<usize> = (0..depth)
        .filter(|&z| {
            needed.iter().any(|m| {
                by_modality[m]
                    .voxels
                    .index_axis(Axis(0), z)
                    .iter()
                    .any(|&v| v != 0.0)
            })
        })
        .collect();
    if nonempty.len() < keep_count {
        return Err(Error::Data(format!(
            "subject {subject_id}: only {} nonempty slices, need {keep_count}",
            nonempty.len()
        )));
    }
    let start = (nonempty.len() - keep_count) / 2;
    let selected = &nonempty[start..start + keep_count];

    let norms: BTreeMap<Modality, NormParams> = needed
        .iter()
        .map(|m| (*m, volume_range(by_modality[m])))
        .collect();

    let prep = |m: Modality, z: usize| -> Array2<f64> {
        let raw = by_modality[&m]
            .voxels
            .index_axis(Axis(0), z)
            .mapv(|v| v as f64);
        let resized = resize_bilinear(&raw, out_size, out_size);
        let np = &norms[&m];
        resized.mapv(|v| np.normalize(v))
    };

    let samples = selected
        .iter()
        .map(|&z| SliceSample {
            subject_id: subject_id.clone(),
            slice_index: z,
            sources: source_modalities.iter().map(|&m| prep(m, z)).collect(),
            target: prep(target_modality, z),
        })
        .collect();

    Ok(SubjectSlices { samples, norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn volume_with_band(
        modality: Modality,
        depth: usize,
        body: std::ops::Range<usize>,
        scale: f32,
    ) -> ModalityVolume {
        let mut voxels = Array3::<f32>::zeros((depth, 20, 20));
        for z in body {
            for y in 5..15 {
                for x in 5..15 {
                    voxels[[z, y, x]] = scale * (1.0 + (y + x) as f32 / 30.0);
                }
            }
        }
        ModalityVolume {
            subject_id: "subA".into(),
            modality,
            voxels,
            spacing: [1.0; 3],
        }
    }

    fn subject(depth: usize, body: std::ops::Range<usize>) -> Vec<ModalityVolume> {
        vec![
            volume_with_band(Modality::T1, depth, body.clone(), 100.0),
            volume_with_band(Modality::T2, depth, body.clone(), 220.0),
            volume_with_band(Modality::Flair, depth, body, 60.0),
        ]
    }

    #[test]
    fn keeps_middle_of_nonempty_band() {
        let vols = subject(40, 6..34); // 28 nonempty slices
        let out = extract_slices(&vols, &[Modality::T1, Modality::T2], Modality::Flair, 20, 32)
            .unwrap();
        assert_eq!(out.samples.len(), 20);
        // count-centred: skip (28-20)/2 = 4 from the first nonempty (6)
        assert_eq!(out.samples.first().unwrap().slice_index, 10);
        assert_eq!(out.samples.last().unwrap().slice_index, 29);
        for s in &out.samples {
            assert_eq!(s.sources.len(), 2);
            assert_eq!(s.sources[0].dim(), (32, 32));
            assert_eq!(s.target.dim(), (32, 32));
            for img in s.sources.iter().chain([&s.target]) {
                assert!(img.iter().all(|&v| (-1.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn too_few_nonempty_slices_is_an_error_naming_the_subject() {
        let vols = subject(40, 10..15);
        let err = extract_slices(&vols, &[Modality::T1], Modality::Flair, 20, 32).unwrap_err();
        assert!(err.to_string().contains("subA"), "{err}");
    }

    #[test]
    fn all_zero_volume_is_an_error() {
        let vols = subject(10, 0..0);
        assert!(extract_slices(&vols, &[Modality::T1], Modality::Flair, 1, 32).is_err());
    }

    #[test]
    fn missing_modality_is_an_error() {
        let vols = subject(40, 5..35);
        let err =
            extract_slices(&vols, &[Modality::T1c], Modality::Flair, 10, 32).unwrap_err();
        assert!(err.to_string().contains("T1c"), "{err}");
    }

    #[test]
    fn normalization_round_trips() {
        let np = NormParams { min: 12.5, max: 812.0 };
        for v in [12.5, 100.0, 500.0, 812.0] {
            let back = np.denormalize(np.normalize(v));
            assert!((back - v).abs() < 1e-6);
        }
        // hand case: min 0 / max 2, value 1 -> exactly 0
        let np = NormParams { min: 0.0, max: 2.0 };
        assert_eq!(np.normalize(1.0), 0.0);
        // constant volume convention
        let np = NormParams { min: 3.0, max: 3.0 };
        assert_eq!(np.normalize(3.0), 0.0);
    }
}
