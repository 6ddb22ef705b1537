//! Volumes as directories of 16-bit grayscale PNG slices named
//! `<index:04>.png`, ordered by axial index. Stored values are raw u16
//! counts; the writer maps the volume's intensity range onto the full u16
//! range (per-subject min-max normalization downstream cancels the scale).

use std::path::Path;

use image::{ImageBuffer, Luma};
use ndarray::Array3;

use crate::error::{Error, Result};

use super::{Modality, ModalityVolume};

pub fn read_png_stack(dir: &Path, subject_id: &str, modality: Modality) -> Result<ModalityVolume> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    if names.is_empty() {
        return Err(Error::format(dir, "no .png slices found"));
    }
    names.sort();

    let mut slices: Vec<Vec<u16>> = Vec::with_capacity(names.len());
    let mut dims: Option<(usize, usize)> = None;
    for path in &names {
        let img = image::open(path)
            .map_err(|e| Error::format(path, format!("png decode: {e}")))?
            .into_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(Error::format(
                    path,
                    format!("slice is {h}x{w}, stack started as {}x{}", d.0, d.1),
                ));
            }
            _ => {}
        }
        slices.push(img.into_raw());
    }
    let (h, w) = dims.unwrap();
    let d = slices.len();
    let mut voxels = Array3::<f32>::zeros((d, h, w));
    for (z, slice) in slices.iter().enumerate() {
        let plane = voxels.as_slice_mut().unwrap();
        for (i, &v) in slice.iter().enumerate() {
            plane[z * h * w + i] = v as f32;
        }
    }
    Ok(ModalityVolume {
        subject_id: subject_id.to_string(),
        modality,
        voxels,
        spacing: [1.0, 1.0, 1.0],
    })
}

pub fn write_png_stack(dir: &Path, volume: &ModalityVolume) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (d, h, w) = volume.dims();
    let vmin = volume.voxels.iter().cloned().fold(f32::INFINITY, f32::min);
    let vmax = volume.voxels.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let scale = if vmax > vmin { 65535.0 / (vmax - vmin) } else { 0.0 };
    for z in 0..d {
        let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let v = (volume.voxels[[z, y, x]] - vmin) * scale;
                img.put_pixel(x as u32, y as u32, Luma([v.round().clamp(0.0, 65535.0) as u16]));
            }
        }
        let path = dir.join(format!("{z:04}.png"));
        img.save(&path)
            .map_err(|e| Error::format(&path, format!("png encode: {e}")))?;
    }
    Ok(())
}

/// 16-bit grayscale PNG of a single `[-1, 1]` model-space slice.
pub fn write_slice_png(path: &Path, slice: &ndarray::Array2<f64>) -> Result<()> {
    let (h, w) = slice.dim();
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = ((slice[[y, x]] + 1.0) / 2.0 * 65535.0).round().clamp(0.0, 65535.0);
            img.put_pixel(x as u32, y as u32, Luma([v as u16]));
        }
    }
    img.save(path)
        .map_err(|e| Error::format(path, format!("png encode: {e}")))
}

/// Read a 16-bit grayscale PNG into `[0, 1]`.
pub fn read_slice_png(path: &Path) -> Result<ndarray::Array2<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::format(path, format!("png decode: {e}")))?
        .into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    Ok(ndarray::Array2::from_shape_fn((h, w), |(y, x)| {
        raw[y * w + x] as f64 / 65535.0
    }))
}
