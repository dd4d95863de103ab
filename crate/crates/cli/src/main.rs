use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use patchpose_core::geometry::{normalize, PointCloud, UnitQuaternion, Vec3};
use patchpose_core::icosa::{covering_radius_deg, IcosaGroup, GROUP_ORDER};
use patchpose_core::io::{
    load_model_dir, load_obj, load_ply, prepare_template, read_estimates, resolve, save_obj, save_ply,
    patch_colors, synthesize_dataset, write_atomic, write_estimates, AnnotationRecord, Catalog, CatalogEntry,
    DatasetManifest, EstimateRow, SynthConfig, CATALOG_VERSION,
};
use patchpose_core::patch::{annotate_patch, observed_trial, PatchParams};
use patchpose_core::patchnet::{self, TrainConfig};
use patchpose_core::pose::{estimate_pose_search, LossWeights, PatchPair, SearchConfig};
use patchpose_core::pose_head::{self, HeadSample};
use patchpose_core::shapes::{procedural_corpus, ShapeFamily};
use patchpose_core::symmetry::evaluate;
use patchpose_core::{Error, Result};

const GRADCHECK_STEP: f64 = 1e-5;
const PATCHNET_GRAD_TOL: f64 = 1e-4;
const POSEHEAD_GRAD_TOL: f64 = 1e-3;
/// Fraction of a model's trials that must keep the patch centers.
const STABLE_TRIAL_FRACTION: f64 = 0.8;

#[derive(Parser)]
#[command(name = "patchpose", version, about = "Patch-feature annotation and icosahedral pose estimation for point clouds")]
struct Cli {
    /// Base seed for all random draws
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Print nothing but errors
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate the patch of one mesh
    Annotate(AnnotateArgs),
    /// Build a rotated/noisy pose dataset from a directory of meshes
    Synth(SynthArgs),
    /// Check that annotation finds the same patch centers on every instance
    Stability(StabilityArgs),
    /// Estimate rotations, for one cloud pair or a whole dataset
    Estimate(EstimateArgs),
    /// Score an estimates file against a dataset's ground truth
    Evaluate(EvaluateArgs),
    /// Train the per-point patch classifier on a dataset
    TrainPatchnet(TrainArgs),
    /// Train the learned mode/residual head on a dataset
    TrainPosehead(TrainHeadArgs),
    /// Compare analytic gradients with central differences
    Gradcheck(GradcheckArgs),
    /// Diagnostics of the 60-element rotation group
    Group(GroupArgs),
    /// Write a procedural mesh corpus with its catalog
    GenShapes(GenShapesArgs),
}

#[derive(Args, Clone, Copy)]
struct PatchArgs {
    /// Points sampled per model
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Longest pairwise vectors kept
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Direction clustering threshold in degrees
    #[arg(long, default_value_t = 10.0)]
    th: f64,
    /// Ball radius around patch endpoints
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    /// Clusters smaller than this are dropped
    #[arg(long, default_value_t = 1)]
    min_cluster: usize,
}

impl PatchArgs {
    fn params(self) -> PatchParams {
        PatchParams {
            n_points: self.n,
            max_vectors: self.m,
            cos_threshold_deg: self.th,
            ball_radius: self.radius,
            min_cluster_size: self.min_cluster,
        }
    }
}

#[derive(Args)]
struct AnnotateArgs {
    /// OBJ mesh, or ASCII PLY cloud used as is
    #[arg(long)]
    mesh: PathBuf,
    #[command(flatten)]
    patch: PatchArgs,
    /// Annotation record (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Colored PLY with the patch in red
    #[arg(long)]
    viz: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory of OBJ meshes, with an optional catalog.json
    #[arg(long)]
    models: PathBuf,
    /// Rotations per model
    #[arg(long, default_value_t = 10)]
    rotations: usize,
    /// Standard deviation of the Gaussian point noise
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[command(flatten)]
    patch: PatchArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Report (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["manifest", "template"]))]
struct EstimateArgs {
    /// Estimate every instance of this dataset
    #[arg(long, conflicts_with_all = ["template", "observed", "annot", "truth"])]
    manifest: Option<PathBuf>,
    /// Template cloud (PLY)
    #[arg(long, requires = "observed")]
    template: Option<PathBuf>,
    /// Observed cloud (PLY)
    #[arg(long, requires = "template")]
    observed: Option<PathBuf>,
    /// Template annotation; the observed patch is annotated with its parameters
    #[arg(long)]
    annot: Option<PathBuf>,
    /// Ground-truth rotation `w,x,y,z` for reporting the error
    #[arg(long, value_parser = parse_quaternion, allow_hyphen_values = true)]
    truth: Option<UnitQuaternion>,
    /// Weight of the patch chamfer term
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Ignore patches (plain chamfer)
    #[arg(long)]
    no_patch: bool,
    /// Modes refined at full resolution
    #[arg(long, default_value_t = SearchConfig::default().candidates)]
    candidates: usize,
    /// Points in the coarse pass over all modes; 0 disables it
    #[arg(long, default_value_t = SearchConfig::default().coarse_points)]
    coarse_points: usize,
    /// Estimates CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Report (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = patchnet::STABLE_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Parameters (JSON); the loss trace goes next to it as `.loss.csv`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainHeadArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// Weight of the residual norm term
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    /// Parameters (JSON); the loss trace goes next to it as `.loss.csv`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random configurations per model
    #[arg(long, default_value_t = 20)]
    configs: usize,
}

#[derive(Args)]
struct GroupArgs {
    /// Verify the group and exit nonzero on any violation
    #[arg(long)]
    check: bool,
    /// Random rotations for the covering radius estimate
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

#[derive(Args)]
struct GenShapesArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Number of shapes
    #[arg(long, default_value_t = 63)]
    count: usize,
    /// Comma-separated families, or `all`
    #[arg(long, default_value = "all", value_parser = parse_families)]
    families: Families,
}

#[derive(Clone)]
struct Families(Vec<ShapeFamily>);

fn parse_families(s: &str) -> std::result::Result<Families, String> {
    if s == "all" {
        return Ok(Families(ShapeFamily::ALL.to_vec()));
    }
    s.split(',')
        .map(|name| {
            ShapeFamily::ALL
                .into_iter()
                .find(|f| f.name() == name.trim())
                .ok_or_else(|| format!("unknown family `{name}`"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Families)
}

fn parse_quaternion(s: &str) -> std::result::Result<UnitQuaternion, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 4 {
        return Err(format!("expected 4 components, got {}", v.len()));
    }
    UnitQuaternion::try_new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

struct Ctx {
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_trace(out: &Path, trace: &[f64]) -> Result<PathBuf> {
    let path = out.with_extension("loss.csv");
    let mut text = String::from("epoch,loss\n");
    for (k, l) in trace.iter().enumerate() {
        text.push_str(&format!("{k},{l}\n"));
    }
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn model_id_of(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn is_ply(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"))
}

fn annotate(ctx: &Ctx, a: &AnnotateArgs) -> Result<()> {
    let params = a.patch.params();
    params.validate()?;
    let cloud = if is_ply(&a.mesh) {
        normalize(&load_ply(&a.mesh)?)?.0
    } else {
        prepare_template(&load_obj(&a.mesh)?, params.n_points, ctx.seed)?.0
    };
    let ann = annotate_patch(&cloud, &params)?;
    let record = AnnotationRecord {
        seed: Some(ctx.seed),
        ..AnnotationRecord::new(model_id_of(&a.mesh), &ann)
    };
    record.save(&a.out)?;
    if let Some(viz) = &a.viz {
        save_ply(viz, &cloud, Some(&patch_colors(cloud.len(), &ann.patch_indices)))?;
    }
    ctx.say(format!(
        "patch points={} centers={} clusters={}",
        ann.patch_indices.len(),
        ann.patch_centers.len(),
        ann.cluster_count
    ));
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let models = load_model_dir(&a.models)?;
    let cfg = SynthConfig {
        rotations_per_model: a.rotations,
        sigma: a.sigma,
        seed: ctx.seed,
        params: a.patch.params(),
    };
    let manifest = synthesize_dataset(&models, &cfg, &a.out)?;
    ctx.say(format!("{} instances", manifest.instances.len()));
    Ok(())
}

#[derive(Serialize)]
struct ModelStability {
    model_id: String,
    trials: usize,
    stable_trials: usize,
    stable: bool,
}

#[derive(Serialize)]
struct StabilityReport {
    seed: u64,
    params: PatchParams,
    required_stable_trials: usize,
    models: Vec<ModelStability>,
    stable_models: usize,
    model_count: usize,
    fraction: f64,
}

fn stability(ctx: &Ctx, a: &StabilityArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let params = manifest.params;
    let mut models = Vec::with_capacity(manifest.models.len());
    for m in &manifest.models {
        let reference = AnnotationRecord::load(&resolve(&a.manifest, &m.annotation_path))?.patch_centers;
        let mut trials = 0;
        let mut stable_trials = 0;
        for inst in manifest.instances.iter().filter(|i| i.model_id == m.model_id) {
            let cloud = load_ply(&resolve(&a.manifest, &inst.cloud_path))?;
            let outcome = observed_trial(&cloud, &params, &reference, inst.rotation()?, Vec3::ZERO);
            if let Some(e) = &outcome.error {
                log::warn!("{}: {e}", inst.instance_id);
            }
            trials += 1;
            stable_trials += usize::from(outcome.stable);
        }
        models.push((m.model_id.clone(), trials, stable_trials));
    }
    let max_trials = models.iter().map(|m| m.1).max().unwrap_or(0);
    let required = (STABLE_TRIAL_FRACTION * max_trials as f64).ceil() as usize;
    let models: Vec<ModelStability> = models
        .into_iter()
        .map(|(model_id, trials, stable_trials)| ModelStability {
            model_id,
            trials,
            stable_trials,
            stable: trials > 0 && stable_trials >= required.min(trials),
        })
        .collect();
    let stable_models = models.iter().filter(|m| m.stable).count();
    let report = StabilityReport {
        seed: manifest.seed,
        params,
        required_stable_trials: required,
        model_count: models.len(),
        fraction: stable_models as f64 / models.len().max(1) as f64,
        stable_models,
        models,
    };
    write_json(&a.out, &report)?;
    ctx.say(format!(
        "stable models {}/{} (fraction {})",
        report.stable_models, report.model_count, report.fraction
    ));
    Ok(())
}

fn estimate_row(
    instance_id: String,
    template: &PointCloud,
    observed: &PointCloud,
    patches: Option<PatchPair>,
    beta: f64,
    cfg: &SearchConfig,
    group: &IcosaGroup,
) -> Result<EstimateRow> {
    let est = estimate_pose_search(template, observed, group, patches, beta, cfg)?;
    let [qw, qx, qy, qz] = est.pose.rotation.to_array();
    let t = est.pose.translation;
    Ok(EstimateRow {
        instance_id,
        mode: est.mode_index,
        qw,
        qx,
        qy,
        qz,
        tx: t.x,
        ty: t.y,
        tz: t.z,
        score: est.score,
    })
}

fn estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<()> {
    let cfg = SearchConfig {
        candidates: a.candidates,
        coarse_points: a.coarse_points,
        ..SearchConfig::default()
    };
    cfg.validate()?;
    if !(a.beta >= 0.0 && a.beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be >= 0, got {}", a.beta)));
    }
    let group = IcosaGroup::new();
    let beta = if a.no_patch { 0.0 } else { a.beta };
    let mut rows = Vec::new();
    if let Some(manifest_path) = &a.manifest {
        let manifest = DatasetManifest::load(manifest_path)?;
        for m in &manifest.models {
            let template = load_ply(&resolve(manifest_path, &m.template_path))?;
            let record = AnnotationRecord::load(&resolve(manifest_path, &m.annotation_path))?;
            for inst in manifest.instances.iter().filter(|i| i.model_id == m.model_id) {
                let observed = load_ply(&resolve(manifest_path, &inst.cloud_path))?;
                let patches = (!a.no_patch).then_some(PatchPair {
                    template: &record.patch_indices,
                    observed: &inst.patch_indices,
                });
                let row = estimate_row(inst.instance_id.clone(), &template, &observed, patches, beta, &cfg, &group)?;
                let err = row.rotation()?.geodesic_deg(&inst.rotation()?);
                log::info!("{}: mode {} error {err} deg", inst.instance_id, row.mode);
                rows.push(row);
            }
        }
        ctx.say(format!("{} estimates", rows.len()));
    } else {
        let (Some(tp), Some(op)) = (&a.template, &a.observed) else {
            unreachable!("clap enforces the input group");
        };
        let template = load_ply(tp)?;
        let observed = load_ply(op)?;
        let record = a.annot.as_deref().map(AnnotationRecord::load).transpose()?;
        let observed_patch = match &record {
            Some(r) if !a.no_patch => Some(annotate_patch(&observed, &r.params)?.patch_indices),
            _ => None,
        };
        let patches = record.as_ref().zip(observed_patch.as_ref()).map(|(r, o)| PatchPair {
            template: &r.patch_indices,
            observed: o,
        });
        let beta = if patches.is_some() { beta } else { 0.0 };
        let row = estimate_row(model_id_of(op), &template, &observed, patches, beta, &cfg, &group)?;
        let mut line = format!("mode={}", row.mode);
        if let Some(truth) = &a.truth {
            line.push_str(&format!(" angle_error_deg={}", row.rotation()?.geodesic_deg(truth)));
        }
        ctx.say(line);
        rows.push(row);
    }
    write_estimates(&a.out, &rows)
}

fn evaluate_cmd(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let estimates = read_estimates(&a.estimates)?
        .into_iter()
        .map(|r| Ok((r.instance_id.clone(), r.rotation()?)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&estimates, &manifest.ground_truths()?)?;
    write_json(&a.out, &report)?;
    ctx.say(format!(
        "mean_deg={} median_deg={} map_5deg={}",
        report.mean_deg, report.median_deg, report.map_5deg
    ));
    Ok(())
}

fn train_config(ctx: &Ctx, epochs: usize, lr: f64) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs,
        learning_rate: lr,
        seed: ctx.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_hidden(hidden: usize) -> Result<()> {
    if hidden == 0 {
        return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
    }
    Ok(())
}

fn train_patchnet(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let cfg = train_config(ctx, a.epochs, a.lr)?;
    check_hidden(a.hidden)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let dataset = manifest
        .instances
        .iter()
        .map(|inst| {
            let cloud = load_ply(&resolve(&a.manifest, &inst.cloud_path))?;
            let mut labels = vec![0u8; cloud.len()];
            for &i in &inst.patch_indices {
                *labels
                    .get_mut(i)
                    .ok_or(Error::IndexOutOfRange { index: i, len: cloud.len() })? = 1;
            }
            Ok((cloud, labels))
        })
        .collect::<Result<Vec<_>>>()?;
    let init = patchnet::init_params(a.hidden, cfg.seed);
    let (params, trace) = patchnet::train_with_trace(&init, &dataset, &cfg)?;
    params.save(&a.out)?;
    let trace_path = write_trace(&a.out, &trace)?;
    ctx.say(format!(
        "loss {} -> {} (trace {})",
        trace[0],
        trace[trace.len() - 1],
        trace_path.display()
    ));
    Ok(())
}

fn train_posehead(ctx: &Ctx, a: &TrainHeadArgs) -> Result<()> {
    let cfg = train_config(ctx, a.epochs, a.lr)?;
    check_hidden(a.hidden)?;
    if !(a.lambda1 >= 0.0 && a.lambda1.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda1 must be >= 0, got {}", a.lambda1)));
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut dataset = Vec::with_capacity(manifest.instances.len());
    for m in &manifest.models {
        let template = load_ply(&resolve(&a.manifest, &m.template_path))?;
        for inst in manifest.instances.iter().filter(|i| i.model_id == m.model_id) {
            dataset.push(HeadSample {
                template: template.clone(),
                observed: load_ply(&resolve(&a.manifest, &inst.cloud_path))?,
                rotation: inst.rotation()?,
                patch_indices: inst.patch_indices.clone(),
            });
        }
    }
    let weights = LossWeights {
        lambda1: a.lambda1,
        ..LossWeights::default()
    };
    let group = IcosaGroup::new();
    let init = pose_head::init_head(a.hidden, cfg.seed);
    let (params, trace) = pose_head::train_pose_head_with_trace(&init, &dataset, &group, weights, &cfg)?;
    params.save(&a.out)?;
    let trace_path = write_trace(&a.out, &trace)?;
    let acc = pose_head::mode_accuracy(&params, &dataset, &group)?;
    ctx.say(format!(
        "loss {} -> {} train_mode_accuracy={} (trace {})",
        trace[0],
        trace[trace.len() - 1],
        acc,
        trace_path.display()
    ));
    Ok(())
}

/// Returns whether every check passed.
fn gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> Result<bool> {
    let pn = patchnet::random_gradient_checks(a.configs, ctx.seed, GRADCHECK_STEP)?;
    let ph = pose_head::random_gradient_checks(a.configs, ctx.seed, GRADCHECK_STEP)?;
    ctx.say(format!("patchnet max_rel_err={pn:e} (tolerance {PATCHNET_GRAD_TOL:e})"));
    ctx.say(format!("posehead max_rel_err={ph:e} (tolerance {POSEHEAD_GRAD_TOL:e})"));
    Ok(pn <= PATCHNET_GRAD_TOL && ph <= POSEHEAD_GRAD_TOL)
}

fn group_cmd(ctx: &Ctx, a: &GroupArgs) -> Result<bool> {
    let g = IcosaGroup::new();
    let closure = g.closure_residual_deg();
    let inverse = g.inverse_residual_deg();
    let separation = g.min_separation_deg();
    let bound = covering_radius_deg();
    ctx.say(format!("elements={}", g.len()));
    ctx.say(format!("closure_residual_deg={closure:e}"));
    ctx.say(format!("inverse_residual_deg={inverse:e}"));
    ctx.say(format!("min_separation_deg={separation}"));
    let mut ok = g.len() == GROUP_ORDER && closure < 1e-6 && inverse < 1e-6 && (separation - 72.0).abs() <= 1e-6;
    if a.samples > 0 {
        let covering = g.covering_radius_estimate(a.samples, ctx.seed);
        ctx.say(format!("covering_radius_deg={covering} (exact {bound})"));
        ok &= covering <= bound + 1e-9;
    }
    if a.check && !ok {
        eprintln!("error: group check failed");
    }
    Ok(ok || !a.check)
}

fn gen_shapes(ctx: &Ctx, a: &GenShapesArgs) -> Result<()> {
    patchpose_core::io::create_dir_all(&a.out)?;
    let shapes = procedural_corpus(&a.families.0, a.count, ctx.seed);
    let mut catalog = Catalog {
        version: CATALOG_VERSION,
        shapes: Vec::with_capacity(shapes.len()),
    };
    for (i, s) in shapes.iter().enumerate() {
        let file = format!("{}.obj", s.id);
        save_obj(&a.out.join(&file), &s.mesh)?;
        catalog.shapes.push(CatalogEntry {
            model_id: s.id.clone(),
            file,
            family: s.family.name().to_string(),
            seed: patchpose_core::rng::derive_seed(ctx.seed, i as u64),
            symmetry: s.symmetry.clone(),
        });
    }
    catalog.save(&a.out.join("catalog.json"))?;
    ctx.say(format!("{} shapes", shapes.len()));
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Annotate(a) => annotate(&ctx, a).map(|_| true),
        Command::Synth(a) => synth(&ctx, a).map(|_| true),
        Command::Stability(a) => stability(&ctx, a).map(|_| true),
        Command::Estimate(a) => estimate(&ctx, a).map(|_| true),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a).map(|_| true),
        Command::TrainPatchnet(a) => train_patchnet(&ctx, a).map(|_| true),
        Command::TrainPosehead(a) => train_posehead(&ctx, a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(&ctx, a),
        Command::Group(a) => group_cmd(&ctx, a),
        Command::GenShapes(a) => gen_shapes(&ctx, a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
