//! File formats and dataset synthesis.
//!
//! Everything is plain text: OBJ (`v`/`f` subset), ASCII PLY, JSON
//! records and a CSV of pose estimates. Floats are written in the
//! shortest form that parses back to the same bits. Files are written to
//! a temporary sibling and renamed into place.

mod obj;
mod ply;
mod records;
mod synth;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use ply::{load_ply, parse_ply, patch_colors, save_ply, write_ply, GRAY, RED};
pub use records::{
    read_estimates, resolve, write_estimates, AnnotationRecord, Catalog, CatalogEntry, DatasetManifest,
    EstimateRow, InstanceEntry, ModelEntry, ANNOTATION_VERSION, ESTIMATES_HEADER, CATALOG_VERSION, MANIFEST_VERSION,
};
pub use synth::{
    load_model_dir, prepare_template, synthesize_dataset, ModelSource, SynthConfig, DENSE_FACTOR,
};

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn create_dir_all(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Parses JSON text, reporting structural mismatches as schema errors.
pub(crate) fn from_json_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))
}

pub(crate) fn check_version(value: &serde_json::Value, expected: u32) -> Result<()> {
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == expected as u64 => Ok(()),
        _ => Err(Error::Schema("version".into())),
    }
}
