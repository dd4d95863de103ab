//! Classify-then-refine rotation search.
//!
//! The observed cloud is compared against the template under each of the
//! 60 icosahedral rotation modes; the best mode is then corrected by a
//! residual rotation found by bounded coordinate descent. The score is the
//! chamfer distance, optionally plus a chamfer term restricted to the
//! patch points of both clouds:
//!
//! ```text
//! score(q) = CD(q T, O) + beta * CD(q T_patch, O_patch)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    chamfer_points, chamfer_to_target, farthest_from_centroid, farthest_point_sample, NeighborTable, PointCloud,
    Pose, UnitQuaternion, Vec3,
};
use crate::icosa::{clamp_residual, constrain_delta, IcosaGroup, GROUP_ORDER};
use crate::patchnet::cross_entropy_loss;

pub const DEFAULT_BETA: f64 = 1.0;

/// Patch index sets of the template and of the observed cloud.
#[derive(Clone, Copy, Debug)]
pub struct PatchPair<'a> {
    pub template: &'a [usize],
    pub observed: &'a [usize],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub iterations: usize,
    pub initial_step_deg: f64,
    pub shrink_factor: f64,
    pub angle_bound_deg: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            iterations: 40,
            initial_step_deg: 18.0,
            shrink_factor: 0.5,
            angle_bound_deg: 35.999,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.iterations >= 1
            && self.initial_step_deg > 0.0
            && self.initial_step_deg <= self.angle_bound_deg
            && self.shrink_factor > 0.0
            && self.shrink_factor < 1.0
            && self.angle_bound_deg < 36.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid refine config {self:?}")))
        }
    }

    /// Smallest probe step reachable in `iterations` sweeps.
    pub fn step_floor_deg(&self) -> f64 {
        self.initial_step_deg * self.shrink_factor.powi(self.iterations as i32 - 1)
    }
}

/// Mode selection strategy of [`estimate_pose_search`].
///
/// With `coarse_points == 0` the `candidates` best raw mode scores are
/// refined and the lowest refined score wins; `candidates == 1` is the
/// plain argmin-then-refine search. Otherwise every mode is first
/// refined on farthest-point subsamples of `coarse_points` points for
/// `coarse_iterations` sweeps, and the `candidates` best of those are
/// refined again on the full clouds, starting from their coarse
/// residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub refine: RefineConfig,
    pub coarse_points: usize,
    pub coarse_iterations: usize,
    pub candidates: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            refine: RefineConfig::default(),
            coarse_points: 128,
            coarse_iterations: 16,
            candidates: 5,
        }
    }
}

impl SearchConfig {
    /// Argmin over the raw mode scores followed by one refinement.
    pub fn argmin_only(refine: RefineConfig) -> Self {
        SearchConfig {
            refine,
            coarse_points: 0,
            coarse_iterations: 1,
            candidates: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        if !(1..=GROUP_ORDER).contains(&self.candidates) || self.coarse_iterations == 0 {
            return Err(Error::InvalidParameter(format!("invalid search config {self:?}")));
        }
        Ok(())
    }

    fn coarse_refine(&self) -> RefineConfig {
        RefineConfig {
            iterations: self.coarse_iterations,
            ..self.refine
        }
    }
}

/// Rotates every point by `q` (about the origin).
pub fn rotate_points(points: &[Vec3], q: &UnitQuaternion) -> Vec<Vec3> {
    let m = q.to_matrix();
    points
        .iter()
        .map(|p| {
            Vec3::new(
                m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
                m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
                m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
            )
        })
        .collect()
}

fn pick(cloud: &PointCloud, indices: &[usize]) -> Result<Vec<Vec3>> {
    if indices.is_empty() {
        return Err(Error::EmptyPatch);
    }
    Ok(cloud.select(indices)?.into_points())
}

/// Scores candidate rotations of a template against one observed cloud.
/// The observed side's neighbour tables are built once.
pub struct ModeScorer {
    template: Vec<Vec3>,
    observed: Vec<Vec3>,
    observed_table: NeighborTable,
    patch: Option<(Vec<Vec3>, Vec<Vec3>, NeighborTable)>,
    beta: f64,
}

impl ModeScorer {
    pub fn new(template: &PointCloud, observed: &PointCloud, patches: Option<PatchPair>, beta: f64) -> Result<Self> {
        if template.is_empty() || observed.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let patch = match patches {
            Some(pp) => Some((pick(template, pp.template)?, pick(observed, pp.observed)?)),
            None => None,
        };
        Self::from_points(template.points().to_vec(), observed.points().to_vec(), patch, beta)
    }

    fn from_points(
        template: Vec<Vec3>,
        observed: Vec<Vec3>,
        patch: Option<(Vec<Vec3>, Vec<Vec3>)>,
        beta: f64,
    ) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        Ok(ModeScorer {
            observed_table: NeighborTable::new(&observed),
            template,
            observed,
            patch: patch.map(|(t, o)| {
                let table = NeighborTable::new(&o);
                (t, o, table)
            }),
            beta,
        })
    }

    /// Plain chamfer distance of the rotated template.
    pub fn chamfer(&self, q: &UnitQuaternion) -> f64 {
        chamfer_to_target(&rotate_points(&self.template, q), &self.observed, &self.observed_table)
    }

    pub fn score(&self, q: &UnitQuaternion) -> f64 {
        let base = self.chamfer(q);
        match &self.patch {
            Some((t, o, table)) if self.beta != 0.0 => {
                base + self.beta * chamfer_to_target(&rotate_points(t, q), o, table)
            }
            _ => base,
        }
    }

    pub fn score_modes(&self, group: &IcosaGroup) -> Vec<f64> {
        group.elements().iter().map(|g| self.score(g)).collect()
    }

    /// Coordinate descent on the residual `r` of `r ⊗ g`: each sweep
    /// probes `axis_rot(±step) ⊗ r` about x, y and z, keeping any probe
    /// that lowers the score; a sweep without improvement shrinks the
    /// step. A probe beyond the angle bound is pulled back onto it along
    /// its own axis. Returns the residual and its score.
    pub fn refine(&self, g: &UnitQuaternion, cfg: &RefineConfig) -> Result<(UnitQuaternion, f64)> {
        self.refine_from(g, UnitQuaternion::IDENTITY, cfg)
    }

    /// [`ModeScorer::refine`] starting from residual `start`.
    pub fn refine_from(
        &self,
        g: &UnitQuaternion,
        start: UnitQuaternion,
        cfg: &RefineConfig,
    ) -> Result<(UnitQuaternion, f64)> {
        cfg.validate()?;
        let mut residual = start;
        let mut best = self.score(&residual.compose(g));
        let mut step = cfg.initial_step_deg;
        for _ in 0..cfg.iterations {
            let mut improved = false;
            for axis in [Vec3::X, Vec3::Y, Vec3::Z] {
                for sign in [1.0, -1.0] {
                    let mut probe = UnitQuaternion::from_axis_angle_deg(axis, sign * step).compose(&residual);
                    if probe.angle_deg() > cfg.angle_bound_deg {
                        probe = clamp_residual(&probe, cfg.angle_bound_deg);
                        if probe == residual {
                            continue;
                        }
                    }
                    let s = self.score(&probe.compose(g));
                    if s < best {
                        best = s;
                        residual = probe;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= cfg.shrink_factor;
            }
        }
        Ok((residual, best))
    }
}

/// Score of every rotation mode; clouds are expected mean-centred.
pub fn score_modes(
    template: &PointCloud,
    observed: &PointCloud,
    group: &IcosaGroup,
    patches: Option<PatchPair>,
    beta: f64,
) -> Result<Vec<f64>> {
    Ok(ModeScorer::new(template, observed, patches, beta)?.score_modes(group))
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Indices sorted by ascending value, lower index first on ties.
pub fn ranked_modes(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn refine_delta(
    template: &PointCloud,
    observed: &PointCloud,
    g: &UnitQuaternion,
    patches: Option<PatchPair>,
    beta: f64,
    cfg: &RefineConfig,
) -> Result<UnitQuaternion> {
    Ok(ModeScorer::new(template, observed, patches, beta)?.refine(g, cfg)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub mode_index: usize,
    pub residual: UnitQuaternion,
    /// Chamfer distance of the centred clouds at the returned rotation.
    pub score: f64,
    pub mode_scores: Vec<f64>,
}

fn centered(cloud: &PointCloud) -> (PointCloud, Vec3) {
    let c = Vec3::mean_order_free(cloud.points());
    (cloud.translate(-c), c)
}

/// Farthest point subsample, or the whole set when it is small enough.
fn coarse_subset(points: &PointCloud, n: usize) -> Result<Vec<Vec3>> {
    if points.len() <= n {
        return Ok(points.points().to_vec());
    }
    let start = farthest_from_centroid(points);
    Ok(farthest_point_sample(points, n, start)?.0.into_points())
}

/// Full search: centre both clouds, choose a mode, refine its residual
/// and recover the translation from the two centroids.
pub fn estimate_pose_search(
    template: &PointCloud,
    observed: &PointCloud,
    group: &IcosaGroup,
    patches: Option<PatchPair>,
    beta: f64,
    cfg: &SearchConfig,
) -> Result<PoseEstimate> {
    cfg.validate()?;
    if template.is_empty() || observed.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (t, ct) = centered(template);
    let (o, co) = centered(observed);
    let scorer = ModeScorer::new(&t, &o, patches, beta)?;
    let mode_scores = scorer.score_modes(group);
    let starts: Vec<(usize, UnitQuaternion)> = if cfg.coarse_points == 0 {
        ranked_modes(&mode_scores)
            .into_iter()
            .take(cfg.candidates)
            .map(|m| (m, UnitQuaternion::IDENTITY))
            .collect()
    } else {
        let coarse = ModeScorer::from_points(
            coarse_subset(&t, cfg.coarse_points)?,
            coarse_subset(&o, cfg.coarse_points)?,
            scorer.patch.as_ref().map(|(pt, po, _)| (pt.clone(), po.clone())),
            beta,
        )?;
        let coarse_cfg = cfg.coarse_refine();
        let mut refined = Vec::with_capacity(group.len());
        for (m, g) in group.elements().iter().enumerate() {
            let (r, s) = coarse.refine(g, &coarse_cfg)?;
            refined.push((m, r, s));
        }
        let scores: Vec<f64> = refined.iter().map(|x| x.2).collect();
        ranked_modes(&scores)
            .into_iter()
            .take(cfg.candidates)
            .map(|k| (refined[k].0, refined[k].1))
            .collect()
    };
    let mut best: Option<(usize, UnitQuaternion, f64)> = None;
    for (mode, start) in starts {
        let (residual, s) = scorer.refine_from(&group.elements()[mode], start, &cfg.refine)?;
        if best.is_none_or(|b| s < b.2) {
            best = Some((mode, residual, s));
        }
    }
    let (mode_index, residual, _) = best.expect("at least one candidate");
    let rotation = residual.compose(&group.elements()[mode_index]);
    let score = scorer.chamfer(&rotation);
    Ok(PoseEstimate {
        pose: Pose {
            rotation,
            translation: co - rotation.rotate(ct),
        },
        mode_index,
        residual,
        score,
        mode_scores,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pose_rec: f64,
    pub q_norm: f64,
    pub patch: f64,
    pub total: f64,
}

/// Residual parameters before the bound is applied: a scale whose
/// sigmoid sets the real part, and an axis direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDelta {
    pub scale: f64,
    pub axis: Vec3,
}

impl RawDelta {
    pub fn constrained(&self) -> UnitQuaternion {
        constrain_delta(self.scale, self.axis)
    }
}

/// Training objective of the learned pipeline:
///
/// ```text
/// L = CD(R T, O) + lambda1 (|dq| - 1)^2 + lambda2 CE(patch)
/// ```
///
/// with `R = dq ⊗ G[argmax logits]`.
#[allow(clippy::too_many_arguments)]
pub fn pose_loss(
    mode_logits: &[f64],
    raw_delta: RawDelta,
    template: &PointCloud,
    observed: &PointCloud,
    patch_probs: &[f64],
    patch_labels: &[u8],
    weights: LossWeights,
    group: &IcosaGroup,
) -> Result<LossBreakdown> {
    if mode_logits.len() != GROUP_ORDER {
        return Err(Error::LengthMismatch {
            left: mode_logits.len(),
            right: GROUP_ORDER,
        });
    }
    let dq = raw_delta.constrained();
    let predicted = dq.compose(&group.elements()[argmax(mode_logits)]);
    let pose_rec = chamfer_points(&rotate_points(template.points(), &predicted), observed.points());
    let q_norm = (dq.norm() - 1.0).powi(2);
    let patch = cross_entropy_loss(patch_probs, patch_labels)?;
    Ok(LossBreakdown {
        pose_rec,
        q_norm,
        patch,
        total: pose_rec + weights.lambda1 * q_norm + weights.lambda2 * patch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_rotation, random_rotation, shuffle};
    use crate::io::prepare_template;
    use crate::shapes::{generate, ShapeFamily};

    fn shape(family: ShapeFamily, n: usize, seed: u64) -> PointCloud {
        let (mesh, _) = generate(family, seed);
        prepare_template(&mesh, n, seed).unwrap().0
    }

    #[test]
    fn exact_member_is_recovered() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Composite, 128, 1);
        let o = apply_rotation(&t, &g.elements()[7], Vec3::ZERO);
        let s = score_modes(&t, &o, &g, None, 0.0).unwrap();
        assert_eq!(argmin(&s), 7);
        assert!(s[7] <= 1e-9);
        let s = score_modes(&t, &t, &g, None, 0.0).unwrap();
        assert_eq!(argmin(&s), 0);
    }

    #[test]
    fn beta_zero_equals_plain_chamfer() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Mug, 96, 2);
        let o = apply_rotation(&t, &random_rotation(4), Vec3::ZERO);
        let idx: Vec<usize> = (0..20).collect();
        let pp = PatchPair { template: &idx, observed: &idx };
        let s = score_modes(&t, &o, &g, Some(pp), 0.0).unwrap();
        for (k, q) in g.elements().iter().enumerate() {
            let plain = chamfer_points(&rotate_points(t.points(), q), o.points());
            assert!((s[k] - plain).abs() <= 1e-12);
        }
    }

    #[test]
    fn score_errors() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Box, 32, 1);
        let pp = PatchPair { template: &[], observed: &[1] };
        assert!(matches!(score_modes(&t, &t, &g, Some(pp), 1.0), Err(Error::EmptyPatch)));
        let pp = PatchPair { template: &[1], observed: &[] };
        assert!(matches!(score_modes(&t, &t, &g, Some(pp), 1.0), Err(Error::EmptyPatch)));
        let pp = PatchPair { template: &[99], observed: &[1] };
        assert!(score_modes(&t, &t, &g, Some(pp), 1.0).is_err());
    }

    #[test]
    fn refine_at_exact_mode_stays_identity() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Composite, 128, 3);
        let o = apply_rotation(&t, &g.elements()[12], Vec3::ZERO);
        let r = refine_delta(&t, &o, &g.elements()[12], None, 0.0, &RefineConfig::default()).unwrap();
        assert_eq!(r, UnitQuaternion::IDENTITY);
    }

    #[test]
    fn refine_recovers_ten_degrees_about_x() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Composite, 128, 4);
        let mode = g.elements()[21];
        let truth = UnitQuaternion::from_axis_angle_deg(Vec3::X, 10.0);
        let o = apply_rotation(&t, &truth.compose(&mode), Vec3::ZERO);
        let scorer = ModeScorer::new(&t, &o, None, 0.0).unwrap();
        // dense grid over the angle about x as the oracle
        let grid_best = (0..=400)
            .map(|k| -20.0 + 0.1 * k as f64)
            .min_by(|a, b| {
                let sa = scorer.score(&UnitQuaternion::from_axis_angle_deg(Vec3::X, *a).compose(&mode));
                let sb = scorer.score(&UnitQuaternion::from_axis_angle_deg(Vec3::X, *b).compose(&mode));
                sa.total_cmp(&sb)
            })
            .unwrap();
        assert!((grid_best - 10.0).abs() < 0.05);
        let (r, s) = scorer.refine(&mode, &RefineConfig::default()).unwrap();
        assert!(r.geodesic_deg(&truth) <= 0.5, "{}", r.geodesic_deg(&truth));
        assert!(s <= scorer.score(&mode));
    }

    #[test]
    fn refine_respects_bound_and_never_worsens() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Mug, 96, 5);
        for seed in 0..5 {
            let o = apply_rotation(&t, &random_rotation(seed), Vec3::ZERO);
            let scorer = ModeScorer::new(&t, &o, None, 0.0).unwrap();
            for k in [0, 13, 42] {
                let m = g.elements()[k];
                let (r, s) = scorer.refine(&m, &RefineConfig::default()).unwrap();
                assert!(r.angle_deg() < 36.0);
                assert!(s <= scorer.score(&m));
            }
        }
    }

    #[test]
    fn refine_config_validation() {
        assert!(RefineConfig::default().validate().is_ok());
        let bad = RefineConfig { angle_bound_deg: 36.0, ..RefineConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RefineConfig { initial_step_deg: 40.0, ..RefineConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RefineConfig { shrink_factor: 1.0, ..RefineConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_pair_gives_identity() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Composite, 96, 6);
        let e = estimate_pose_search(&t, &t, &g, None, 0.0, &SearchConfig::default()).unwrap();
        assert_eq!(e.mode_index, 0);
        assert_eq!(e.pose.rotation.angle_deg(), 0.0);
        assert_eq!(e.score, 0.0);
    }

    #[test]
    fn estimate_invariants_and_shuffle_invariance() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Composite, 96, 7);
        let q = random_rotation(8);
        let shift = Vec3::new(0.3, -1.0, 2.0);
        let o = apply_rotation(&t, &q, Vec3::ZERO).translate(shift);
        let e = estimate_pose_search(&t, &o, &g, None, 0.0, &SearchConfig::default()).unwrap();
        let composed = e.residual.compose(&g.elements()[e.mode_index]);
        assert!(composed.geodesic_deg(&e.pose.rotation) < 1e-9);
        assert_eq!(e.mode_scores.len(), 60);
        assert_eq!(argmin(&e.mode_scores), e.mode_index);
        let recomputed = chamfer_points(
            &rotate_points(t.translate(-crate::geometry::centroid(&t)).points(), &e.pose.rotation),
            o.translate(-crate::geometry::centroid(&o)).points(),
        );
        assert!((e.score - recomputed).abs() < 1e-9);
        assert!(e.pose.rotation.geodesic_deg(&q) < 0.5);
        assert!((e.pose.translation - shift).norm() < 1e-9);

        let (ts, _) = shuffle(&t, 1);
        let (os, _) = shuffle(&o, 2);
        let e2 = estimate_pose_search(&ts, &os, &g, None, 0.0, &SearchConfig::default()).unwrap();
        assert_eq!(e, e2);
    }

    #[test]
    fn argmin_invariant_under_affine_rescaling() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Mug, 64, 9);
        let o = apply_rotation(&t, &random_rotation(10), Vec3::ZERO);
        let s = score_modes(&t, &o, &g, None, 0.0).unwrap();
        let scaled: Vec<f64> = s.iter().map(|v| 3.5 * v + 0.25).collect();
        assert_eq!(argmin(&s), argmin(&scaled));
    }

    #[test]
    fn loss_at_optimum_and_weighting() {
        let g = IcosaGroup::new();
        let t = shape(ShapeFamily::Composite, 64, 11);
        let o = apply_rotation(&t, &g.elements()[5], Vec3::ZERO);
        let mut logits = vec![0.0; 60];
        logits[5] = 3.0;
        // a saturated scale pins the residual at identity
        let raw_identity = RawDelta { scale: 1e9, axis: Vec3::Z };
        assert!(raw_identity.constrained().angle_deg() < 1e-6);
        let probs = [1.0, 0.0, 1.0];
        let labels = [1, 0, 1];
        let l = pose_loss(&logits, raw_identity, &t, &o, &probs, &labels, LossWeights::default(), &g).unwrap();
        assert!(l.pose_rec <= 1e-9);
        assert!(l.patch <= 1e-11);
        assert!(l.q_norm <= 1e-24);
        assert!((l.total - (l.pose_rec + l.q_norm + l.patch)).abs() <= 1e-12);

        let raw = RawDelta { scale: -0.7, axis: Vec3::new(0.3, -1.0, 0.2) };
        let w0 = LossWeights { lambda1: 0.0, lambda2: 0.0 };
        let l = pose_loss(&logits, raw, &t, &o, &[0.3, 0.6, 0.2], &labels, w0, &g).unwrap();
        assert_eq!(l.total, l.pose_rec);
        assert!(l.q_norm < 1e-24);
        assert!(matches!(
            pose_loss(&logits[..59], raw, &t, &o, &probs, &labels, w0, &g),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            pose_loss(&logits, raw, &t, &o, &probs[..2], &labels, w0, &g),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
