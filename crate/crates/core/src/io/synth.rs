use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_rotation, farthest_from_centroid, farthest_point_sample, normalize, perturb,
    random_rotation, sample_surface_points, shuffle, NormalizationRecord, PerturbationConfig,
    PointCloud, TriangleMesh, Vec3,
};
use crate::patch::{annotate_patch, PatchParams};
use crate::rng::{derive_seed, stream_seed};
use crate::symmetry::SymmetrySpec;

use super::records::{
    AnnotationRecord, Catalog, DatasetManifest, InstanceEntry, ModelEntry, MANIFEST_VERSION,
};
use super::{create_dir_all, load_obj, save_ply};

/// Surface samples drawn per template point before farthest point sampling.
pub const DENSE_FACTOR: usize = 8;

const STREAM_SAMPLE: u64 = 11;
const STREAM_INSTANCES: u64 = 12;
const STREAM_ROTATION: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

#[derive(Clone, Debug)]
pub struct ModelSource {
    pub model_id: String,
    pub source_path: PathBuf,
    pub mesh: TriangleMesh,
    pub symmetry: SymmetrySpec,
}

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub rotations_per_model: usize,
    pub sigma: f64,
    pub seed: u64,
    pub params: PatchParams,
}

/// Samples `n` well-spread surface points and normalizes them: dense
/// area-weighted sampling, farthest point sampling from the point
/// farthest from the centroid, then centring and scaling.
pub fn prepare_template(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<(PointCloud, NormalizationRecord)> {
    let dense = sample_surface_points(mesh, DENSE_FACTOR * n.max(1), seed)?;
    let start = farthest_from_centroid(&dense);
    let (cloud, _) = farthest_point_sample(&dense, n, start)?;
    normalize(&cloud)
}

/// Loads the meshes of a directory: those listed in its `catalog.json`
/// if present, otherwise every `*.obj` in file-name order with no
/// symmetry.
pub fn load_model_dir(dir: &Path) -> Result<Vec<ModelSource>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "model directory not found"),
        ));
    }
    let catalog = dir.join("catalog.json");
    if catalog.exists() {
        return Catalog::load(&catalog)?
            .shapes
            .into_iter()
            .map(|e| {
                let path = dir.join(&e.file);
                Ok(ModelSource {
                    mesh: load_obj(&path)?,
                    model_id: e.model_id,
                    source_path: path,
                    symmetry: e.symmetry,
                })
            })
            .collect();
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            Ok(ModelSource {
                model_id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                mesh: load_obj(&path)?,
                source_path: path,
                symmetry: SymmetrySpec::None,
            })
        })
        .collect()
}

/// Builds a pose dataset under `out_dir`: per model a template cloud and
/// its annotation, per instance a rotated, noisy, reshuffled copy. The
/// manifest is written to `out_dir/manifest.json` and returned.
pub fn synthesize_dataset(models: &[ModelSource], cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", cfg.sigma)));
    }
    cfg.params.validate()?;
    for sub in ["templates", "annotations", "clouds"] {
        create_dir_all(&out_dir.join(sub))?;
    }
    let mut manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        rotations_per_model: cfg.rotations_per_model,
        params: cfg.params,
        models: Vec::with_capacity(models.len()),
        instances: Vec::with_capacity(models.len() * cfg.rotations_per_model),
    };
    let instance_base = stream_seed(cfg.seed, STREAM_INSTANCES);
    for (mi, model) in models.iter().enumerate() {
        let sample_seed = stream_seed(derive_seed(cfg.seed, mi as u64), STREAM_SAMPLE);
        let (template, _) = prepare_template(&model.mesh, cfg.params.n_points, sample_seed)?;
        let ann = annotate_patch(&template, &cfg.params)?;
        let template_path = format!("templates/{}.ply", model.model_id);
        let annotation_path = format!("annotations/{}.json", model.model_id);
        save_ply(&out_dir.join(&template_path), &template, None)?;
        AnnotationRecord {
            seed: Some(sample_seed),
            ..AnnotationRecord::new(&model.model_id, &ann)
        }
        .save(&out_dir.join(&annotation_path))?;
        let in_patch = ann.labels(template.len());
        for r in 0..cfg.rotations_per_model {
            let seed = derive_seed(instance_base, (mi * cfg.rotations_per_model + r) as u64);
            let rotation = random_rotation(stream_seed(seed, STREAM_ROTATION));
            let rotated = apply_rotation(&template, &rotation, Vec3::ZERO);
            let noisy = perturb(
                &rotated,
                &PerturbationConfig {
                    sigma: cfg.sigma,
                    seed: stream_seed(seed, STREAM_NOISE),
                },
            )?;
            let (observed, perm) = shuffle(&noisy, stream_seed(seed, STREAM_SHUFFLE));
            let instance_id = format!("{}_r{:02}", model.model_id, r);
            let cloud_path = format!("clouds/{instance_id}.ply");
            save_ply(&out_dir.join(&cloud_path), &observed, None)?;
            manifest.instances.push(InstanceEntry {
                instance_id,
                model_id: model.model_id.clone(),
                rotation: rotation.to_array(),
                sigma: cfg.sigma,
                seed,
                cloud_path,
                patch_indices: (0..perm.len()).filter(|&k| in_patch[perm[k]] != 0).collect(),
            });
        }
        manifest.models.push(ModelEntry {
            model_id: model.model_id.clone(),
            source_path: model.source_path.to_string_lossy().into_owned(),
            symmetry: model.symmetry.clone(),
            template_path,
            annotation_path,
        });
        log::info!("synthesized {} ({} instances)", model.model_id, cfg.rotations_per_model);
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
