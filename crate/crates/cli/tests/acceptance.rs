//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! to stderr (uncaptured) before asserting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use patchpose_core::geometry::{
    apply_rotation, chamfer_distance, perturb, random_rotation, shuffle, PerturbationConfig,
};
use patchpose_core::icosa::{constrain_delta, covering_radius_deg, residual_w_floor, GROUP_ORDER};
use patchpose_core::io::prepare_template;
use patchpose_core::patch::{annotate_patch, patch_stability_trial};
use patchpose_core::patchnet::{self, TrainConfig};
use patchpose_core::pose::{estimate_pose_search, LossWeights, ModeScorer, PatchPair, SearchConfig};
use patchpose_core::pose_head::{self, HeadSample};
use patchpose_core::shapes::{generate, procedural_corpus, ShapeFamily};
use patchpose_core::symmetry::{evaluate, GroundTruth, InstanceError};
use patchpose_core::{EvalReport, IcosaGroup, PatchParams, PointCloud, UnitQuaternion, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn c01_patch_stability() {
    let start = Instant::now();
    let params = PatchParams {
        n_points: 1024,
        max_vectors: 200,
        cos_threshold_deg: 10.0,
        ball_radius: 0.2,
        ..PatchParams::default()
    };
    let shapes = procedural_corpus(&ShapeFamily::ALL, 63, 1);
    let mut stable = 0;
    let mut per_family: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (i, shape) in shapes.iter().enumerate() {
        let (cloud, _) = prepare_template(&shape.mesh, 1024, i as u64).unwrap();
        let rep = patch_stability_trial(&cloud, &params, 10, 0.1, 1000 + i as u64).unwrap();
        let ok = rep.stable_trials >= 8;
        stable += ok as usize;
        let e = per_family.entry(shape.family.name()).or_default();
        e.0 += ok as usize;
        e.1 += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = stable as f64 / shapes.len() as f64;
    report(
        1,
        frac >= 0.8 && secs <= 300.0,
        &format!("stable {stable}/{} ({frac:.3}) per family {per_family:?} in {secs:.1}s", shapes.len()),
    );
}

struct Recovery {
    errors: Vec<f64>,
    report: EvalReport,
}

fn recovery(sigma: f64) -> Recovery {
    let group = IcosaGroup::new();
    let cfg = SearchConfig::default();
    let shapes = procedural_corpus(&[ShapeFamily::Mug, ShapeFamily::Composite], 10, 100);
    assert!(shapes.iter().all(|s| s.family.is_asymmetric()));
    let mut estimates = Vec::new();
    let mut truths = Vec::new();
    for (si, shape) in shapes.iter().enumerate() {
        let (template, _) = prepare_template(&shape.mesh, 256, si as u64).unwrap();
        for r in 0..20 {
            let seed = (si * 1000 + r) as u64;
            let q = random_rotation(seed);
            let observed = perturb(
                &apply_rotation(&template, &q, Vec3::ZERO),
                &PerturbationConfig { sigma, seed: seed + 7 },
            )
            .unwrap();
            let est = estimate_pose_search(&template, &observed, &group, None, 0.0, &cfg).unwrap();
            let id = format!("{}_{r}", shape.id);
            estimates.push((id.clone(), est.pose.rotation));
            truths.push(GroundTruth { id, rotation: q, symmetry: shape.symmetry.clone() });
        }
    }
    let report = evaluate(&estimates, &truths).unwrap();
    let errors = report.per_instance_errors.iter().map(|e| e.deg).collect();
    Recovery { errors, report }
}

#[test]
fn c02_noiseless_pose_recovery() {
    let Recovery { errors, report: r } = recovery(0.0);
    assert_eq!(errors.len(), 200);
    report(
        2,
        r.mean_deg <= 2.0 && r.map_5deg >= 0.95,
        &format!("mean {:.3} deg median {:.3} deg mAP5 {:.3}", r.mean_deg, r.median_deg, r.map_5deg),
    );
}

/// Refines every one of the 60 modes on the full clouds and keeps the
/// lowest score.
fn dense_oracle(template: &PointCloud, observed: &PointCloud, group: &IcosaGroup) -> UnitQuaternion {
    let scorer = ModeScorer::new(template, observed, None, 0.0).unwrap();
    let cfg = SearchConfig::default().refine;
    let mut best = (f64::INFINITY, UnitQuaternion::identity());
    for g in group.elements() {
        let (residual, score) = scorer.refine(g, &cfg).unwrap();
        if score < best.0 {
            best = (score, residual.compose(g));
        }
    }
    best.1
}

#[test]
fn c03_noisy_pose_recovery() {
    let Recovery { report: r, .. } = recovery(0.05);

    let group = IcosaGroup::new();
    let mut oracle = Vec::new();
    for (si, shape) in procedural_corpus(&[ShapeFamily::Mug, ShapeFamily::Composite], 10, 100)
        .iter()
        .enumerate()
    {
        let (template, _) = prepare_template(&shape.mesh, 256, si as u64).unwrap();
        let seed = (si * 1000) as u64;
        let q = random_rotation(seed);
        let centered = template.translate(-Vec3::mean_order_free(template.points()));
        let observed = perturb(
            &apply_rotation(&template, &q, Vec3::ZERO),
            &PerturbationConfig { sigma: 0.05, seed: seed + 7 },
        )
        .unwrap();
        let observed = observed.translate(-Vec3::mean_order_free(observed.points()));
        oracle.push(dense_oracle(&centered, &observed, &group).geodesic_deg(&q));
    }
    let oracle_mean = mean(&oracle);
    let oracle_map = oracle.iter().filter(|&&e| e < 5.0).count() as f64 / oracle.len() as f64;
    report(
        3,
        r.mean_deg <= 8.0 && r.map_5deg >= 0.5 && oracle_mean <= 8.0 && oracle_map >= 0.5,
        &format!(
            "mean {:.3} deg mAP5 {:.3}; dense oracle on {} instances mean {oracle_mean:.3} mAP5 {oracle_map:.3}",
            r.mean_deg,
            r.map_5deg,
            oracle.len()
        ),
    );
}

/// Angle of the z-twist part of `gt⁻¹ ⊗ est`, in degrees.
fn spin_error_deg(gt: &UnitQuaternion, est: &UnitQuaternion) -> f64 {
    let d = gt.inverse().compose(est);
    let a = (2.0 * d.z().atan2(d.w())).to_degrees().abs();
    a.min(360.0 - a)
}

#[test]
fn c04_patch_guidance_ablation() {
    let n = 256;
    let group = IcosaGroup::new();
    let cfg = SearchConfig::default();
    let params = PatchParams { n_points: n, ..PatchParams::default() };
    let (mut guided, mut plain) = (Vec::new(), Vec::new());
    for (si, shape) in procedural_corpus(&[ShapeFamily::Mug], 5, 200).iter().enumerate() {
        let (template, _) = prepare_template(&shape.mesh, n, si as u64).unwrap();
        let ann = annotate_patch(&template, &params).unwrap();
        let labels = ann.labels(n);
        for r in 0..12 {
            let seed = (si * 1000 + r) as u64;
            let q = UnitQuaternion::from_axis_angle_deg(Vec3::Z, 360.0 * (seed as f64 * 0.618034).fract());
            let noisy = perturb(
                &apply_rotation(&template, &q, Vec3::ZERO),
                &PerturbationConfig { sigma: 0.1, seed: seed + 7 },
            )
            .unwrap();
            let (observed, perm) = shuffle(&noisy, seed + 3);
            let observed_patch: Vec<usize> = (0..n).filter(|&k| labels[perm[k]] == 1).collect();
            let pair = PatchPair { template: &ann.patch_indices, observed: &observed_patch };
            let with = estimate_pose_search(&template, &observed, &group, Some(pair), 1.0, &cfg).unwrap();
            let without = estimate_pose_search(&template, &observed, &group, None, 0.0, &cfg).unwrap();
            guided.push(spin_error_deg(&q, &with.pose.rotation));
            plain.push(spin_error_deg(&q, &without.pose.rotation));
        }
    }
    let (g, p) = (mean(&guided), mean(&plain));
    report(
        4,
        g <= 5.0 && p >= 4.0 * g,
        &format!("beta=1 mean spin {g:.3} deg, beta=0 mean spin {p:.3} deg, ratio {:.2}", p / g),
    );
}

#[test]
fn c05_group_correctness() {
    let g = IcosaGroup::new();
    let closure = g.closure_residual_deg();
    let inverse = g.inverse_residual_deg();
    let separation = g.min_separation_deg();
    let covering = g.covering_radius_estimate(100_000, 5);
    let structure = g.len() == GROUP_ORDER && closure < 1e-6 && inverse < 1e-6 && (separation - 72.0).abs() <= 1e-6;
    report(
        5,
        structure && (37.0..=37.8).contains(&covering),
        &format!(
            "elements {} closure {closure:e} inverse {inverse:e} min separation {separation} \
             covering estimate {covering:.4} (exact deep hole {:.4})",
            g.len(),
            covering_radius_deg()
        ),
    );
}

#[test]
fn c06_residual_bound() {
    let mut rng = patchpose_core::rng::seeded(6);
    let scale = Normal::new(0.0, 4.0).unwrap();
    let axis = Normal::new(0.0, 1.0).unwrap();
    let (mut worst_norm, mut worst_angle) = (0.0f64, 0.0f64);
    for k in 0..100_000 {
        let s = scale.sample(&mut rng);
        let a = if k % 1000 == 0 {
            Vec3::ZERO
        } else {
            Vec3::new(axis.sample(&mut rng), axis.sample(&mut rng), axis.sample(&mut rng)) * rng.random_range(1e-3..10.0)
        };
        let q = constrain_delta(s, a);
        worst_norm = worst_norm.max((q.norm() - 1.0).abs());
        worst_angle = worst_angle.max(q.angle_deg());
    }
    let floor = residual_w_floor();
    let low = (constrain_delta(-1e4, Vec3::X).w() - (std::f64::consts::PI / 10.0).cos()).abs();
    let high = (constrain_delta(1e4, Vec3::X).w() - 1.0).abs();
    report(
        6,
        worst_norm <= 1e-12 && worst_angle < 36.0 && low <= 1e-9 && high <= 1e-9,
        &format!(
            "max |norm-1| {worst_norm:e} max angle {worst_angle:.6} deg floor {floor} \
             saturation errors {low:e} / {high:e}"
        ),
    );
}

#[test]
fn c07_gradient_fidelity() {
    let pn = patchnet::random_gradient_checks(20, 2024, 1e-5).unwrap();
    let ph = pose_head::random_gradient_checks(20, 2024, 1e-5).unwrap();
    report(
        7,
        pn <= 1e-4 && ph <= 1e-3,
        &format!("patchnet max rel err {pn:e}, pose head max rel err {ph:e}"),
    );
}

#[test]
fn c08_toy_training() {
    let n = 256;
    let params = PatchParams { n_points: n, ..PatchParams::default() };
    let mut data = Vec::new();
    for (si, shape) in procedural_corpus(&[ShapeFamily::Box], 42, 300).iter().enumerate() {
        let (template, _) = prepare_template(&shape.mesh, n, si as u64).unwrap();
        let labels = annotate_patch(&template, &params).unwrap().labels(n);
        let q = random_rotation(si as u64 + 50);
        data.push((apply_rotation(&template, &q, Vec3::ZERO), labels));
    }
    let (train, test) = data.split_at(28);
    let cfg = TrainConfig { epochs: 500, learning_rate: 1.0, seed: 7 };
    let net = patchnet::train(&patchnet::init_params(64, 7), train, &cfg).unwrap();
    let (mut acc, mut iou) = (0.0, 0.0);
    for (cloud, labels) in test {
        acc += patchnet::accuracy(&patchnet::forward(&net, cloud), labels, 0.5);
        let truth: Vec<usize> = (0..n).filter(|&k| labels[k] == 1).collect();
        iou += patchnet::intersection_over_union(&patchnet::predict_patch(&net, cloud, truth.len()).unwrap(), &truth);
    }
    let acc = acc / test.len() as f64;
    let iou = iou / test.len() as f64;

    let group = IcosaGroup::new();
    let (mesh, _) = generate(ShapeFamily::Composite, 3);
    let (template, _) = prepare_template(&mesh, 64, 3).unwrap();
    let patch = annotate_patch(&template, &PatchParams::default()).unwrap().patch_indices;
    let sample = |seed: u64| {
        let q = random_rotation(seed);
        HeadSample {
            template: template.clone(),
            observed: apply_rotation(&template, &q, Vec3::ZERO),
            rotation: q,
            patch_indices: patch.clone(),
        }
    };
    let train: Vec<HeadSample> = (0..3000).map(|k| sample(1000 + k)).collect();
    let held_out: Vec<HeadSample> = (0..200).map(|k| sample(900_000 + k)).collect();
    let head_cfg = TrainConfig { epochs: 500, learning_rate: 0.01, seed: 7 };
    let head = pose_head::train_pose_head(&pose_head::init_head(64, 7), &train, &group, LossWeights::default(), &head_cfg)
        .unwrap();
    let mode_acc = pose_head::mode_accuracy(&head, &held_out, &group).unwrap();

    report(
        8,
        acc >= 0.9 && mode_acc >= 0.8,
        &format!(
            "patchnet held-out accuracy {acc:.4} (top-k IoU {iou:.3}); pose head held-out mode accuracy {mode_acc:.3}"
        ),
    );
}

#[test]
fn c09_chamfer_and_metrics() {
    let (mesh, _) = generate(ShapeFamily::Composite, 9);
    let (x, _) = prepare_template(&mesh, 300, 1).unwrap();
    let (y, _) = prepare_template(&generate(ShapeFamily::Mug, 4).0, 200, 2).unwrap();
    let self_dist = chamfer_distance(&x, &x);
    let asym = (chamfer_distance(&x, &y) - chamfer_distance(&y, &x)).abs();
    let mut invariance = 0.0f64;
    for seed in 0..20 {
        let q = random_rotation(seed);
        let d = chamfer_distance(&apply_rotation(&x, &q, Vec3::ZERO), &apply_rotation(&y, &q, Vec3::ZERO));
        invariance = invariance.max((d - chamfer_distance(&x, &y)).abs());
    }

    let sym = generate(ShapeFamily::Composite, 0).1;
    let base = [random_rotation(1), random_rotation(2), random_rotation(3)];
    let offsets = [6.0, 2.0, 4.0];
    let truths: Vec<GroundTruth> = base
        .iter()
        .enumerate()
        .map(|(k, &q)| GroundTruth { id: format!("i{k}"), rotation: q, symmetry: sym.clone() })
        .collect();
    let estimates: Vec<(String, UnitQuaternion)> = base
        .iter()
        .zip(offsets)
        .enumerate()
        .map(|(k, (q, d))| (format!("i{k}"), q.compose(&UnitQuaternion::from_axis_angle_deg(Vec3::new(1.0, -1.0, 2.0), d))))
        .collect();
    let r = evaluate(&estimates, &truths).unwrap();
    let per_ok = r.per_instance_errors.iter().zip(offsets).all(|(e, d)| (e.deg - d).abs() < 1e-9);
    let mut sorted: Vec<f64> = r.per_instance_errors.iter().map(|e| e.deg).collect();
    sorted.sort_by(f64::total_cmp);
    let agg_ok = r.count == 3
        && r.mean_deg == (sorted[0] + sorted[1] + sorted[2]) / 3.0
        && r.median_deg == sorted[1]
        && r.map_5deg == 2.0 / 3.0;
    let exact = EvalReport::from_errors(
        offsets.iter().enumerate().map(|(k, &deg)| InstanceError { id: format!("i{k}"), deg }).collect(),
    )
    .unwrap();
    let exact_ok = exact.mean_deg == 4.0 && exact.median_deg == 4.0 && exact.map_5deg == 2.0 / 3.0;

    report(
        9,
        self_dist == 0.0 && asym <= 1e-12 && invariance <= 1e-9 && per_ok && agg_ok && exact_ok,
        &format!(
            "d(X,X) {self_dist} asymmetry {asym:e} rotation drift {invariance:e} fixture mean {} median {} mAP {}",
            r.mean_deg, r.median_deg, r.map_5deg
        ),
    );
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the full CLI workflow inside `root` and returns every artifact
/// plus the stdout of each command.
fn cli_workflow(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let r = |p: &str| root.join(p).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["gen-shapes".into(), "--out".into(), r("shapes"), "--count".into(), "3".into()],
        vec![
            "annotate".into(), "--mesh".into(), r("shapes/cylinder_001.obj"), "--out".into(), r("annot.json"),
            "--viz".into(), r("annot.ply"), "--n".into(), "256".into(),
        ],
        vec![
            "synth".into(), "--models".into(), r("shapes"), "--rotations".into(), "2".into(), "--n".into(),
            "128".into(), "--out".into(), r("ds"),
        ],
        vec!["stability".into(), "--manifest".into(), r("ds/manifest.json"), "--out".into(), r("stab.json")],
        vec!["estimate".into(), "--manifest".into(), r("ds/manifest.json"), "--out".into(), r("est.csv")],
        vec![
            "evaluate".into(), "--estimates".into(), r("est.csv"), "--manifest".into(), r("ds/manifest.json"),
            "--out".into(), r("eval.json"),
        ],
        vec![
            "train-patchnet".into(), "--manifest".into(), r("ds/manifest.json"), "--epochs".into(), "3".into(),
            "--hidden".into(), "8".into(), "--out".into(), r("pn.json"),
        ],
        vec![
            "train-posehead".into(), "--manifest".into(), r("ds/manifest.json"), "--epochs".into(), "2".into(),
            "--hidden".into(), "4".into(), "--out".into(), r("head.json"),
        ],
        vec!["gradcheck".into(), "--configs".into(), "3".into()],
        vec!["group".into(), "--check".into(), "--samples".into(), "2000".into()],
    ];
    let mut stdout = BTreeMap::new();
    for (k, args) in steps.iter().enumerate() {
        let out = Command::new(env!("CARGO_BIN_EXE_patchpose")).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        stdout.insert(format!("stdout/{k:02}_{}", args[0]), out.stdout);
    }
    let mut all = snapshot(root);
    all.extend(stdout);
    all
}

#[test]
fn c10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    std::fs::create_dir(&root).unwrap();
    let first = cli_workflow(&root);
    std::fs::remove_dir_all(&root).unwrap();
    std::fs::create_dir(&root).unwrap();
    let second = cli_workflow(&root);
    let differing: Vec<&String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    report(
        10,
        first.len() == second.len() && differing.is_empty() && first.len() > 20,
        &format!("{} artifacts compared, differing {differing:?}", first.len()),
    );
}
