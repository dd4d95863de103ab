use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{UnitQuaternion, Vec3, UNIT_TOLERANCE};
use crate::patch::{PatchAnnotation, PatchParams};
use crate::symmetry::{GroundTruth, SymmetrySpec};

use super::{check_version, from_json_value, read_text, write_atomic};

pub const ANNOTATION_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
pub const CATALOG_VERSION: u32 = 1;

fn load_json(path: &Path, version: u32) -> Result<serde_json::Value> {
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
    check_version(&value, version)?;
    Ok(value)
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub version: u32,
    pub model_id: String,
    pub params: PatchParams,
    pub patch_indices: Vec<usize>,
    pub patch_centers: Vec<Vec3>,
    pub cluster_count: usize,
    /// Seed of the sampling that produced the annotated cloud, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AnnotationRecord {
    pub fn new(model_id: impl Into<String>, ann: &PatchAnnotation) -> Self {
        AnnotationRecord {
            version: ANNOTATION_VERSION,
            model_id: model_id.into(),
            params: ann.params,
            patch_indices: ann.patch_indices.clone(),
            patch_centers: ann.patch_centers.clone(),
            cluster_count: ann.cluster_count,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != ANNOTATION_VERSION {
            return Err(Error::Schema("version".into()));
        }
        if self.params.validate().is_err() {
            return Err(Error::Schema("params".into()));
        }
        let sorted = self.patch_indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = self.patch_indices.iter().all(|&i| i < self.params.n_points);
        if !sorted || !in_range {
            return Err(Error::Schema("patch_indices".into()));
        }
        if self.patch_centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::Schema("patch_centers".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_version(&value, ANNOTATION_VERSION)?;
        let r: AnnotationRecord = from_json_value(value)?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        save_json(path, self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub model_id: String,
    pub source_path: String,
    pub symmetry: SymmetrySpec,
    /// Sampled, normalized model cloud, relative to the manifest.
    pub template_path: String,
    pub annotation_path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub instance_id: String,
    pub model_id: String,
    /// Ground-truth rotation `[w, x, y, z]` taking the template to the
    /// observed cloud.
    pub rotation: [f64; 4],
    pub sigma: f64,
    pub seed: u64,
    pub cloud_path: String,
    /// Template patch carried through the point shuffle.
    pub patch_indices: Vec<usize>,
}

impl InstanceEntry {
    pub fn rotation(&self) -> Result<UnitQuaternion> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::try_new(w, x, y, z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub rotations_per_model: usize,
    pub params: PatchParams,
    pub models: Vec<ModelEntry>,
    pub instances: Vec<InstanceEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Schema("version".into()));
        }
        let mut model_ids = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if !model_ids.insert(m.model_id.as_str()) {
                return Err(Error::Schema(format!("models[{i}].model_id")));
            }
            if m.symmetry.validate().is_err() {
                return Err(Error::Schema(format!("models[{i}].symmetry")));
            }
        }
        let mut instance_ids = HashSet::new();
        for (i, inst) in self.instances.iter().enumerate() {
            if !instance_ids.insert(inst.instance_id.as_str()) {
                return Err(Error::Schema(format!("instances[{i}].instance_id")));
            }
            if !model_ids.contains(inst.model_id.as_str()) {
                return Err(Error::Schema(format!("instances[{i}].model_id")));
            }
            let n = inst.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::Schema(format!("instances[{i}].rotation")));
            }
            if !(inst.sigma >= 0.0 && inst.sigma.is_finite()) {
                return Err(Error::Schema(format!("instances[{i}].sigma")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_version(&value, MANIFEST_VERSION)?;
        let m: DatasetManifest = from_json_value(value)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        save_json(path, self)
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    /// Ground truth of every instance, with the symmetry of its model.
    pub fn ground_truths(&self) -> Result<Vec<GroundTruth>> {
        self.instances
            .iter()
            .map(|inst| {
                let model = self
                    .model(&inst.model_id)
                    .ok_or_else(|| Error::Schema(format!("instance {} model_id", inst.instance_id)))?;
                Ok(GroundTruth {
                    id: inst.instance_id.clone(),
                    rotation: inst.rotation()?,
                    symmetry: model.symmetry.clone(),
                })
            })
            .collect()
    }
}

/// Resolves a path stored in a manifest relative to the manifest file.
pub fn resolve(manifest_path: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest_path.parent().unwrap_or(Path::new("")).join(p)
}

/// Index of generated model meshes, written next to them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: u32,
    pub shapes: Vec<CatalogEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub model_id: String,
    pub file: String,
    pub family: String,
    pub seed: u64,
    pub symmetry: SymmetrySpec,
}

impl Catalog {
    pub fn load(path: &Path) -> Result<Self> {
        from_json_value(load_json(path, CATALOG_VERSION)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub instance_id: String,
    pub mode: usize,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub score: f64,
}

impl EstimateRow {
    pub fn rotation(&self) -> Result<UnitQuaternion> {
        UnitQuaternion::try_new(self.qw, self.qx, self.qy, self.qz)
    }
}

pub const ESTIMATES_HEADER: &str = "instance_id,mode,qw,qx,qy,qz,tx,ty,tz,score";

pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let mut bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    if rows.is_empty() {
        bytes = format!("{ESTIMATES_HEADER}\n").into_bytes();
    }
    write_atomic(path, &bytes)
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    let text = read_text(path)?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    if text.lines().next().map(str::trim) != Some(ESTIMATES_HEADER) {
        return Err(parse_err(1, format!("header must be `{ESTIMATES_HEADER}`")));
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in r.deserialize::<EstimateRow>().enumerate() {
        let row = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(k + 2);
            parse_err(line, e.to_string())
        })?;
        rows.push(row);
    }
    Ok(rows)
}
