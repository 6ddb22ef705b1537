//! Minimal NIfTI-1 reader/writer for single-file volumes (`.nii`, with
//! transparent gzip for `.nii.gz`).
//!
//! Reading handles both endiannesses (detected via `sizeof_hdr`), the
//! common scalar datatypes (u8, i16, u16, i32, f32, f64) and `scl_slope` /
//! `scl_inter` rescaling. Writing always emits little-endian float32.
//! The file's fastest-varying axis (x) maps to our last axis, so a file
//! with dims `(W, H, D)` loads as a `(D, H, W)` volume with axial first.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use ndarray::Array3;

use crate::error::{Error, Result};

use super::{Modality, ModalityVolume};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

fn is_gz(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("gz")
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_gz(path) {
        Ok(Box::new(GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_nifti(path: &Path, subject_id: &str, modality: Modality) -> Result<ModalityVolume> {
    let mut reader = open_reader(path)?;
    let mut header = [0u8; HEADER_SIZE];
    reader
        .read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;

    let le_size = LittleEndian::read_i32(&header[0..4]);
    let be_size = BigEndian::read_i32(&header[0..4]);
    let big_endian = match (le_size, be_size) {
        (348, _) => false,
        (_, 348) => true,
        _ => {
            return Err(Error::format(
                path,
                format!("sizeof_hdr is {le_size}, not a NIfTI-1 header"),
            ))
        }
    };
    let read_i16 = |buf: &[u8]| {
        if big_endian {
            BigEndian::read_i16(buf)
        } else {
            LittleEndian::read_i16(buf)
        }
    };
    let read_f32 = |buf: &[u8]| {
        if big_endian {
            BigEndian::read_f32(buf)
        } else {
            LittleEndian::read_f32(buf)
        }
    };

    let magic = &header[344..348];
    if &magic[0..3] != b"n+1" && &magic[0..3] != b"ni1" {
        return Err(Error::format(path, "missing NIfTI magic"));
    }
    if &magic[0..3] == b"ni1" {
        return Err(Error::format(
            path,
            "two-file NIfTI (.hdr/.img) is not supported",
        ));
    }

    let ndim = read_i16(&header[40..42]);
    if !(3..=7).contains(&ndim) {
        return Err(Error::format(path, format!("dim[0] = {ndim}, expected 3+")));
    }
    let mut dims = [1usize; 7];
    for (i, d) in dims.iter_mut().enumerate() {
        let v = read_i16(&header[42 + 2 * i..44 + 2 * i]);
        if i < ndim as usize {
            if v < 1 {
                return Err(Error::format(path, format!("dim[{}] = {v}", i + 1)));
            }
            *d = v as usize;
        }
    }
    if dims[3..].iter().any(|&d| d > 1) {
        return Err(Error::format(
            path,
            "volumes with a 4th dimension > 1 are not supported",
        ));
    }
    let (w, h, d) = (dims[0], dims[1], dims[2]);

    let datatype = read_i16(&header[70..72]);
    let voxel_bytes = match datatype {
        DT_UINT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::format(
                path,
                format!("unsupported NIfTI datatype {other}"),
            ))
        }
    };
    let spacing = [
        read_f32(&header[80..84]).abs().max(f32::EPSILON),
        read_f32(&header[84..88]).abs().max(f32::EPSILON),
        read_f32(&header[88..92]).abs().max(f32::EPSILON),
    ];
    let vox_offset = read_f32(&header[108..112]) as usize;
    if vox_offset < HEADER_SIZE {
        return Err(Error::format(path, format!("vox_offset {vox_offset} < 348")));
    }
    let scl_slope = read_f32(&header[112..116]);
    let scl_inter = read_f32(&header[116..120]);

    // skip the extension bytes between header and data (streams are not
    // seekable once gzip is involved)
    let mut skip = vec![0u8; vox_offset - HEADER_SIZE];
    reader.read_exact(&mut skip).map_err(|e| Error::io(path, e))?;

    let count = w * h * d;
    let mut raw = vec![0u8; count * voxel_bytes];
    reader.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;

    let mut values = vec![0f32; count];
    match datatype {
        DT_UINT8 => {
            for (v, &b) in values.iter_mut().zip(raw.iter()) {
                *v = b as f32;
            }
        }
        DT_INT16 => as_f32(&raw, &mut values, big_endian, |b, be| {
            (if be { BigEndian::read_i16(b) } else { LittleEndian::read_i16(b) }) as f32
        }),
        DT_UINT16 => as_f32(&raw, &mut values, big_endian, |b, be| {
            (if be { BigEndian::read_u16(b) } else { LittleEndian::read_u16(b) }) as f32
        }),
        DT_INT32 => as_f32(&raw, &mut values, big_endian, |b, be| {
            (if be { BigEndian::read_i32(b) } else { LittleEndian::read_i32(b) }) as f32
        }),
        DT_FLOAT32 => as_f32(&raw, &mut values, big_endian, |b, be| {
            if be {
                BigEndian::read_f32(b)
            } else {
                LittleEndian::read_f32(b)
            }
        }),
        DT_FLOAT64 => as_f32(&raw, &mut values, big_endian, |b, be| {
            (if be { BigEndian::read_f64(b) } else { LittleEndian::read_f64(b) }) as f32
        }),
        _ => unreachable!(),
    }
    if scl_slope != 0.0 && (scl_slope != 1.0 || scl_inter != 0.0) {
        for v in values.iter_mut() {
            *v = *v * scl_slope + scl_inter;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "volume contains non-finite voxels"));
    }

    // file order is x-fastest: linear index = (z*H + y)*W + x, which is
    // exactly our (D, H, W) row-major order
    let voxels = Array3::from_shape_vec((d, h, w), values)
        .map_err(|e| Error::format(path, format!("shape: {e}")))?;
    Ok(ModalityVolume {
        subject_id: subject_id.to_string(),
        modality,
        voxels,
        spacing,
    })
}

fn as_f32(raw: &[u8], out: &mut [f32], big_endian: bool, conv: impl Fn(&[u8], bool) -> f32) {
    let step = raw.len() / out.len();
    for (i, v) in out.iter_mut().enumerate() {
        *v = conv(&raw[i * step..(i + 1) * step], big_endian);
    }
}

pub fn write_nifti(path: &Path, volume: &ModalityVolume) -> Result<()> {
    let (d, h, w) = volume.dims();
    let mut header = [0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut header[0..4], HEADER_SIZE as i32);
    LittleEndian::write_i16(&mut header[40..42], 3);
    LittleEndian::write_i16(&mut header[42..44], w as i16);
    LittleEndian::write_i16(&mut header[44..46], h as i16);
    LittleEndian::write_i16(&mut header[46..48], d as i16);
    for i in 4..8 {
        LittleEndian::write_i16(&mut header[40 + 2 * i..42 + 2 * i], 1);
    }
    LittleEndian::write_i16(&mut header[70..72], DT_FLOAT32);
    LittleEndian::write_i16(&mut header[72..74], 32);
    LittleEndian::write_f32(&mut header[76..80], 1.0); // qfac
    LittleEndian::write_f32(&mut header[80..84], volume.spacing[0]);
    LittleEndian::write_f32(&mut header[84..88], volume.spacing[1]);
    LittleEndian::write_f32(&mut header[88..92], volume.spacing[2]);
    LittleEndian::write_f32(&mut header[108..112], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut header[112..116], 1.0); // scl_slope
    header[344..348].copy_from_slice(b"n+1\0");

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer: Box<dyn Write> = if is_gz(path) {
        Box::new(GzEncoder::new(BufWriter::new(file), flate2::Compression::fast()))
    } else {
        Box::new(BufWriter::new(file))
    };
    writer.write_all(&header).map_err(|e| Error::io(path, e))?;
    let slice = volume
        .voxels
        .as_slice()
        .expect("volume voxels must be standard layout");
    let mut buf = Vec::with_capacity(slice.len() * 4);
    for &v in slice {
        buf.write_f32::<LittleEndian>(v).unwrap();
    }
    writer.write_all(&buf).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn sample_volume(d: usize, h: usize, w: usize) -> ModalityVolume {
        ModalityVolume {
            subject_id: "sub01".into(),
            modality: Modality::T1,
            voxels: Array3::from_shape_fn((d, h, w), |(z, y, x)| {
                (z * 10000 + y * 100 + x) as f32 * 0.001
            }),
            spacing: [1.0, 1.0, 1.5],
        }
    }

    #[test]
    fn round_trip_nii() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.nii");
        let vol = sample_volume(5, 7, 6);
        write_nifti(&path, &vol).unwrap();
        let back = read_nifti(&path, "sub01", Modality::T1).unwrap();
        assert_eq!(back.dims(), (5, 7, 6));
        assert_eq!(back.voxels, vol.voxels);
        assert_eq!(back.spacing[2], 1.5);
    }

    #[test]
    fn round_trip_nii_gz() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.nii.gz");
        let vol = sample_volume(4, 6, 6);
        write_nifti(&path, &vol).unwrap();
        let back = read_nifti(&path, "sub01", Modality::T1).unwrap();
        assert_eq!(back.voxels, vol.voxels);
    }

    #[test]
    fn truncated_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.nii");
        let vol = sample_volume(4, 6, 6);
        write_nifti(&path, &vol).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_nifti(&path, "s", Modality::T1).unwrap_err();
        assert!(err.to_string().contains("trunc.nii"), "{err}");
    }

    #[test]
    fn garbage_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.nii");
        std::fs::write(&path, vec![7u8; 1024]).unwrap();
        assert!(read_nifti(&path, "s", Modality::T1).is_err());
    }
}
