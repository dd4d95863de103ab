use std::path::PathBuf;

use patchpose_core::io::{load_ply, resolve, synthesize_dataset, ModelSource, SynthConfig};
use patchpose_core::pose::{estimate_pose_search, PatchPair, SearchConfig};
use patchpose_core::shapes::{procedural_corpus, ShapeFamily};
use patchpose_core::symmetry::evaluate;
use patchpose_core::{IcosaGroup, PatchParams};

#[test]
fn synthesize_estimate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let models: Vec<ModelSource> = procedural_corpus(&[ShapeFamily::Composite, ShapeFamily::Mug], 2, 11)
        .into_iter()
        .map(|s| ModelSource {
            model_id: s.id.clone(),
            source_path: PathBuf::from(format!("{}.obj", s.id)),
            mesh: s.mesh,
            symmetry: s.symmetry,
        })
        .collect();
    let cfg = SynthConfig {
        rotations_per_model: 3,
        sigma: 0.0,
        seed: 5,
        params: PatchParams { n_points: 256, ..PatchParams::default() },
    };
    let manifest = synthesize_dataset(&models, &cfg, dir.path()).unwrap();
    assert_eq!(manifest.instances.len(), 6);

    let manifest_path = dir.path().join("manifest.json");
    let group = IcosaGroup::new();
    let mut estimates = Vec::new();
    for inst in &manifest.instances {
        let model = manifest.model(&inst.model_id).unwrap();
        let template = load_ply(&resolve(&manifest_path, &model.template_path)).unwrap();
        let observed = load_ply(&resolve(&manifest_path, &inst.cloud_path)).unwrap();
        let annotation = patchpose_core::io::AnnotationRecord::load(&resolve(&manifest_path, &model.annotation_path)).unwrap();
        let pair = PatchPair { template: &annotation.patch_indices, observed: &inst.patch_indices };
        let est = estimate_pose_search(&template, &observed, &group, Some(pair), 1.0, &SearchConfig::default()).unwrap();
        estimates.push((inst.instance_id.clone(), est.pose.rotation));
    }
    let report = evaluate(&estimates, &manifest.ground_truths().unwrap()).unwrap();
    assert_eq!(report.count, 6);
    assert!(report.median_deg < 1.0, "{report:?}");
}
