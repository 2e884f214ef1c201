//! File interchange: NPY rasters, GeoJSON polygons, PR-curve CSV and dataset manifests.
//!
//! Every writer stages its output in a temporary file next to the target and
//! renames it into place, so readers never observe a partial file.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub mod csv;
pub mod geojson;
pub mod manifest;
pub mod npy;

pub use csv::{read_pr_csv, write_pr_csv, PrTable};
pub use geojson::{
    read_coverage, read_detections, read_ground_truth, write_coverage, write_detections,
    write_ground_truth,
};
pub use manifest::{DatasetManifest, GeoTransform, ManifestRecord};
pub use npy::{read_raster, read_stack, write_raster, write_stack, NpyElement};

/// Writes `bytes` to `path` through a sibling temporary file and an atomic rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        reason: "not valid UTF-8".into(),
    })
}
