//! Dataset manifest: one subject per line, `<id> <MOD>=<path> ...`, paths
//! relative to the manifest's directory. Lines starting with `#` are
//! comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::Modality;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEntry {
    pub id: String,
    pub volumes: BTreeMap<Modality, PathBuf>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<SubjectEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| Error::format(path, format!("line {}: empty entry", lineno + 1)))?
            .to_string();
        let mut volumes = BTreeMap::new();
        for part in parts {
            let (modality, rel) = part.split_once('=').ok_or_else(|| {
                Error::format(
                    path,
                    format!("line {}: expected MODALITY=path, got {part:?}", lineno + 1),
                )
            })?;
            let modality = Modality::from_str(modality)?;
            if volumes.insert(modality, base.join(rel)).is_some() {
                return Err(Error::format(
                    path,
                    format!("line {}: duplicate modality {modality}", lineno + 1),
                ));
            }
        }
        if volumes.is_empty() {
            return Err(Error::format(
                path,
                format!("line {}: subject {id} lists no volumes", lineno + 1),
            ));
        }
        entries.push(SubjectEntry { id, volumes });
    }
    Ok(entries)
}

/// Write a manifest; `paths` must already be relative to `path`'s parent.
pub fn write_manifest(path: &Path, entries: &[(String, BTreeMap<Modality, PathBuf>)]) -> Result<()> {
    let mut out = String::new();
    for (id, volumes) in entries {
        write!(out, "{id}").unwrap();
        for (modality, rel) in volumes {
            write!(out, " {modality}={}", rel.display()).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let entries = vec![
            (
                "sub000".to_string(),
                BTreeMap::from([
                    (Modality::T1, PathBuf::from("sub000/T1.nii.gz")),
                    (Modality::Flair, PathBuf::from("sub000/FLAIR.nii.gz")),
                ]),
            ),
            (
                "sub001".to_string(),
                BTreeMap::from([(Modality::T2, PathBuf::from("sub001/T2.nii.gz"))]),
            ),
        ];
        write_manifest(&path, &entries).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id, "sub000");
        assert_eq!(
            back[0].volumes[&Modality::T1],
            dir.path().join("sub000/T1.nii.gz")
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "sub000 T1:oops.nii\n").unwrap();
        assert!(read_manifest(&path).is_err());
        std::fs::write(&path, "sub000 PD=x.nii\n").unwrap();
        assert!(read_manifest(&path).is_err());
        std::fs::write(&path, "sub000\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ok.txt");
        std::fs::write(&path, "# header\n\nsub000 T1=a.nii\n").unwrap();
        assert_eq!(read_manifest(&path).unwrap().len(), 1);
    }
}
