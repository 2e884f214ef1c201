//! JSON dataset manifest listing images, their labels and group keys.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{read_text, write_atomic};

/// Pixel-to-ground mapping of an image tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub meters_per_pixel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Image id used to tag detections and ground truth.
    pub id: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    pub group_key: String,
    pub geo: GeoTransform,
}

/// Paths inside a manifest are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest always serializes");
        out.push(b'\n');
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Reads and validates a manifest, including that every referenced file exists.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m: Self = serde_json::from_str(&read_text(path)?).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (i, r) in m.records.iter().enumerate() {
            let bad = |reason: String| Error::Format {
                path: path.to_path_buf(),
                reason: format!("record {i}: {reason}"),
            };
            if r.group_key.is_empty() {
                return Err(bad("empty group key".into()));
            }
            if r.labels.is_none() && r.ground_truth.is_none() {
                return Err(bad("needs labels or ground_truth".into()));
            }
            for p in std::iter::once(&r.image)
                .chain(&r.labels)
                .chain(&r.ground_truth)
            {
                let full = base.join(p);
                if !full.is_file() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            "referenced file missing",
                        ),
                    ));
                }
            }
        }
        Ok(m)
    }

    /// Image id → group key.
    pub fn grouping(&self) -> HashMap<String, String> {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.group_key.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dir: &Path, key: &str) -> ManifestRecord {
        std::fs::write(dir.join("img.npy"), b"x").unwrap();
        std::fs::write(dir.join("gt.geojson"), b"x").unwrap();
        ManifestRecord {
            id: "scene-1".into(),
            image: "img.npy".into(),
            labels: None,
            ground_truth: Some("gt.geojson".into()),
            group_key: key.into(),
            geo: GeoTransform {
                origin_lat: 5.6,
                origin_lon: -0.2,
                meters_per_pixel: 0.5,
            },
        }
    }

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            records: vec![record(dir.path(), "urban")],
        };
        let p = dir.path().join("manifest.json");
        m.write(&p).unwrap();
        assert_eq!(DatasetManifest::read(&p).unwrap(), m);
        assert_eq!(m.grouping()["scene-1"], "urban");

        let blank = DatasetManifest {
            records: vec![record(dir.path(), "")],
        };
        blank.write(&p).unwrap();
        assert!(matches!(
            DatasetManifest::read(&p),
            Err(Error::Format { .. })
        ));

        std::fs::remove_file(dir.path().join("gt.geojson")).unwrap();
        m.write(&p).unwrap();
        assert!(DatasetManifest::read(&p).unwrap_err().is_io());
    }
}
