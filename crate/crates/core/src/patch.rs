//! Semi-automatic patch annotation.
//!
//! The longest pairwise vectors of a normalized cloud are clustered by
//! direction; their endpoints, grouped spatially, seed ball neighbourhoods
//! that together form the patch. Pair lengths do not change under
//! rotation, which is what makes the selection stable.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_rotation, centroid, perturb, random_rotation, shuffle, PerturbationConfig, PointCloud,
    UnitQuaternion, Vec3,
};
use crate::rng::{derive_seed, stream_seed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchParams {
    pub n_points: usize,
    pub max_vectors: usize,
    pub cos_threshold_deg: f64,
    pub ball_radius: f64,
    pub min_cluster_size: usize,
}

impl Default for PatchParams {
    fn default() -> Self {
        PatchParams {
            n_points: 1024,
            max_vectors: 20,
            cos_threshold_deg: 10.0,
            ball_radius: 0.1,
            min_cluster_size: 1,
        }
    }
}

fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl PatchParams {
    pub fn validate(&self) -> Result<()> {
        self.validate_for(self.n_points)
    }

    /// Single-linkage distance for grouping endpoints: balls of
    /// `ball_radius` around two endpoints overlap exactly when the
    /// endpoints are at most this far apart.
    pub fn linkage_distance(&self) -> f64 {
        2.0 * self.ball_radius
    }

    /// Checks the parameters against a cloud of `n` points.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                available: n,
            });
        }
        if self.max_vectors == 0 {
            return Err(Error::InvalidParameter("max_vectors must be >= 1".into()));
        }
        if self.max_vectors > pair_count(n) {
            let needed = (2..).find(|&k| pair_count(k) >= self.max_vectors).unwrap_or(n);
            return Err(Error::TooFewPoints {
                needed,
                available: n,
            });
        }
        if !(self.cos_threshold_deg > 0.0 && self.cos_threshold_deg < 90.0) {
            return Err(Error::InvalidParameter(format!(
                "cos_threshold_deg must lie in (0, 90), got {}",
                self.cos_threshold_deg
            )));
        }
        if !(self.ball_radius > 0.0 && self.ball_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ball_radius must be > 0, got {}",
                self.ball_radius
            )));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::InvalidParameter("min_cluster_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Vector between points `i < j`, with its direction sign-flipped so that
/// z >= 0 (then y >= 0, then x >= 0 when the earlier components vanish).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector {
    pub i: usize,
    pub j: usize,
    pub direction: Vec3,
    pub length: f64,
}

fn canonical_direction(d: Vec3) -> Vec3 {
    let flip = if d.z != 0.0 {
        d.z < 0.0
    } else if d.y != 0.0 {
        d.y < 0.0
    } else {
        d.x < 0.0
    };
    if flip {
        -d
    } else {
        d
    }
}

fn feature_vector(points: &[Vec3], i: usize, j: usize) -> Option<FeatureVector> {
    let d = points[j] - points[i];
    let length = d.norm();
    if !(length > 0.0) {
        return None;
    }
    Some(FeatureVector {
        i,
        j,
        direction: canonical_direction(d / length),
        length,
    })
}

/// Descending length, ties by `(i, j)` ascending.
fn by_length_desc(a: &FeatureVector, b: &FeatureVector) -> Ordering {
    b.length
        .total_cmp(&a.length)
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

/// One vector per unordered pair of distinct points. Coincident points
/// give no vector.
pub fn pairwise_vectors(cloud: &PointCloud) -> Result<Vec<FeatureVector>> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            available: n,
        });
    }
    let pts = cloud.points();
    let mut out = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            if let Some(v) = feature_vector(pts, i, j) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// The `m` longest vectors, longest first.
pub fn top_m_by_length(vectors: &[FeatureVector], m: usize) -> Vec<FeatureVector> {
    let mut sorted = vectors.to_vec();
    sorted.sort_by(by_length_desc);
    sorted.truncate(m);
    sorted
}

/// Same result as `top_m_by_length(&pairwise_vectors(cloud)?, m)` without
/// materialising all pairs.
pub fn top_m_pairs(cloud: &PointCloud, m: usize) -> Result<Vec<FeatureVector>> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            available: n,
        });
    }
    let pts = cloud.points();
    // kept sorted by `by_length_desc`; pairs arrive in ascending (i, j)
    // order, so a newcomer only enters on a strictly greater length
    let mut best: Vec<FeatureVector> = Vec::with_capacity(m + 1);
    let mut floor_sq = f64::NEG_INFINITY;
    for i in 0..n {
        let pi = pts[i];
        for j in i + 1..n {
            let sq = pts[j].distance_squared(pi);
            if sq < floor_sq {
                continue;
            }
            let Some(v) = feature_vector(pts, i, j) else {
                continue;
            };
            if best.len() == m && v.length <= best[m - 1].length {
                continue;
            }
            let pos = best.partition_point(|b| by_length_desc(b, &v) == Ordering::Less);
            best.insert(pos, v);
            best.truncate(m);
            if best.len() == m {
                let l = best[m - 1].length;
                floor_sq = l * l * (1.0 - 1e-12);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionCluster {
    pub members: Vec<FeatureVector>,
    pub mean_direction: Vec3,
    /// Set when the cluster has fewer than `min_cluster_size` members.
    pub undersized: bool,
}

/// Greedy agglomerative clustering by direction.
///
/// Vectors are visited longest first; each joins the first cluster whose
/// mean direction is within `th_deg`, otherwise it opens a new cluster.
/// A cluster's mean direction is renormalized after every join.
pub fn cluster_by_cosine(
    vectors: &[FeatureVector],
    th_deg: f64,
    min_cluster_size: usize,
) -> Vec<DirectionCluster> {
    let cos_th = th_deg.to_radians().cos();
    let mut order = vectors.to_vec();
    order.sort_by(by_length_desc);
    let mut clusters: Vec<(Vec<FeatureVector>, Vec3, Vec3)> = Vec::new();
    for v in order {
        match clusters
            .iter_mut()
            .find(|(_, _, mean)| mean.dot(v.direction) >= cos_th)
        {
            Some((members, sum, mean)) => {
                members.push(v);
                *sum += v.direction;
                *mean = sum.normalized().unwrap_or(*mean);
            }
            None => clusters.push((vec![v], v.direction, v.direction)),
        }
    }
    clusters
        .into_iter()
        .map(|(members, _, mean_direction)| DirectionCluster {
            undersized: members.len() < min_cluster_size,
            members,
            mean_direction,
        })
        .collect()
}

/// Endpoint indices of all cluster members, deduplicated and split into
/// single-linkage groups: two endpoints share a group when a chain of
/// endpoints at most `linkage` apart connects them. Groups are ordered by
/// their smallest index; members are ascending.
pub fn endpoints_of_clusters(
    clusters: &[DirectionCluster],
    cloud: &PointCloud,
    linkage: f64,
) -> Vec<Vec<usize>> {
    let mut ends: Vec<usize> = clusters
        .iter()
        .flat_map(|c| c.members.iter().flat_map(|v| [v.i, v.j]))
        .collect();
    ends.sort_unstable();
    ends.dedup();
    let link_sq = linkage * linkage;
    let mut parent: Vec<usize> = (0..ends.len()).collect();
    fn root(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for a in 0..ends.len() {
        for b in a + 1..ends.len() {
            if cloud.get(ends[a]).distance_squared(cloud.get(ends[b])) <= link_sq {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; ends.len()];
    for a in 0..ends.len() {
        let r = root(&mut parent, a);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(ends[a]);
    }
    groups
}

/// Sorted indices of all points within `radius` of any center.
pub fn ball_query(cloud: &PointCloud, centers: &[Vec3], radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| centers.iter().any(|c| p.distance_squared(*c) <= r2))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchAnnotation {
    pub params: PatchParams,
    pub patch_indices: Vec<usize>,
    pub patch_centers: Vec<Vec3>,
    pub cluster_count: usize,
    /// Mean direction of every cluster, in clustering order.
    #[serde(default)]
    pub cluster_directions: Vec<Vec3>,
}

impl PatchAnnotation {
    /// Per-point 0/1 membership labels for a cloud of `n` points.
    pub fn labels(&self, n: usize) -> Vec<u8> {
        let mut l = vec![0u8; n];
        for &i in &self.patch_indices {
            if i < n {
                l[i] = 1;
            }
        }
        l
    }
}

/// Runs the full annotation on a normalized cloud.
///
/// Endpoints are grouped with [`PatchParams::linkage_distance`], so two
/// endpoints share a patch center whenever their balls intersect.
/// Undersized clusters are dropped before endpoint extraction unless that
/// would leave none.
pub fn annotate_patch(cloud: &PointCloud, params: &PatchParams) -> Result<PatchAnnotation> {
    params.validate_for(cloud.len())?;
    let top = top_m_pairs(cloud, params.max_vectors)?;
    if top.is_empty() {
        return Err(Error::DegenerateCloud("all points coincide"));
    }
    let clusters = cluster_by_cosine(&top, params.cos_threshold_deg, params.min_cluster_size);
    let retained: Vec<DirectionCluster> = if clusters.iter().all(|c| c.undersized) {
        clusters.clone()
    } else {
        clusters.iter().filter(|c| !c.undersized).cloned().collect()
    };
    let groups = endpoints_of_clusters(&retained, cloud, params.linkage_distance());
    let mut patch_centers = Vec::with_capacity(groups.len());
    let mut all = Vec::new();
    for g in &groups {
        let seeds: Vec<Vec3> = g.iter().map(|&i| cloud.get(i)).collect();
        let hood = ball_query(cloud, &seeds, params.ball_radius);
        let pts: Vec<Vec3> = hood.iter().map(|&i| cloud.get(i)).collect();
        patch_centers.push(Vec3::mean(&pts));
        all.extend(hood);
    }
    all.sort_unstable();
    all.dedup();
    Ok(PatchAnnotation {
        params: *params,
        patch_indices: all,
        patch_centers,
        cluster_count: clusters.len(),
        cluster_directions: clusters.iter().map(|c| c.mean_direction).collect(),
    })
}

/// Greedy matching of two center sets: repeatedly pair the closest
/// unmatched couple. Returns the number of pairs within `tolerance`, or
/// `None` when the sets differ in size.
pub fn match_centers(reference: &[Vec3], candidate: &[Vec3], tolerance: f64) -> Option<usize> {
    if reference.len() != candidate.len() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (a, r) in reference.iter().enumerate() {
        for (b, c) in candidate.iter().enumerate() {
            pairs.push((r.distance(*c), a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; reference.len()];
    let mut used_b = vec![false; candidate.len()];
    let mut matched = 0;
    for (d, a, b) in pairs {
        if used_a[a] || used_b[b] {
            continue;
        }
        used_a[a] = true;
        used_b[b] = true;
        if d <= tolerance {
            matched += 1;
        }
    }
    Some(matched)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub rotation: UnitQuaternion,
    pub center_count: usize,
    pub matched: usize,
    pub stable: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub reference_centers: Vec<Vec3>,
    pub trials: Vec<TrialOutcome>,
    pub stable_trials: usize,
}

const STREAM_ROTATION: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Annotates `observed`, maps its centers back through the inverse of
/// `rotation` (applied about `center`) and matches them against
/// `reference` with tolerance `2 * ball_radius`.
pub fn observed_trial(
    observed: &PointCloud,
    params: &PatchParams,
    reference: &[Vec3],
    rotation: UnitQuaternion,
    center: Vec3,
) -> TrialOutcome {
    outcome(annotate_patch(observed, params), params, reference, rotation, center)
}

fn outcome(
    annotation: Result<PatchAnnotation>,
    params: &PatchParams,
    reference: &[Vec3],
    rotation: UnitQuaternion,
    center: Vec3,
) -> TrialOutcome {
    match annotation {
        Ok(ann) => {
            let back = rotation.inverse();
            let centers: Vec<Vec3> = ann
                .patch_centers
                .iter()
                .map(|&c| back.rotate(c - center) + center)
                .collect();
            let matched = match_centers(reference, &centers, 2.0 * params.ball_radius);
            TrialOutcome {
                rotation,
                center_count: centers.len(),
                matched: matched.unwrap_or(0),
                stable: matched == Some(reference.len()),
                error: None,
            }
        }
        Err(e) => TrialOutcome {
            rotation,
            center_count: 0,
            matched: 0,
            stable: false,
            error: Some(e.to_string()),
        },
    }
}

/// Annotates a rotated, noisy, reshuffled copy of `cloud` and compares
/// its centers (rotated back) with `reference`.
pub fn stability_trial_with(
    cloud: &PointCloud,
    params: &PatchParams,
    reference: &[Vec3],
    rotation: UnitQuaternion,
    sigma: f64,
    seed: u64,
) -> TrialOutcome {
    let center = centroid(cloud);
    let observed = perturb(
        &apply_rotation(cloud, &rotation, center),
        &PerturbationConfig {
            sigma,
            seed: stream_seed(seed, STREAM_NOISE),
        },
    )
    .map(|noisy| shuffle(&noisy, stream_seed(seed, STREAM_SHUFFLE)).0);
    outcome(
        observed.and_then(|o| annotate_patch(&o, params)),
        params,
        reference,
        rotation,
        center,
    )
}

/// Repeats [`stability_trial_with`] `trials` times; trial `t` uses seed
/// `seed + t` for its rotation, noise and shuffle streams.
pub fn patch_stability_trial(
    cloud: &PointCloud,
    params: &PatchParams,
    trials: usize,
    sigma: f64,
    seed: u64,
) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let reference = annotate_patch(cloud, params)?.patch_centers;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .map(|t| {
            let s = derive_seed(seed, t as u64);
            let rotation = random_rotation(stream_seed(s, STREAM_ROTATION));
            stability_trial_with(cloud, params, &reference, rotation, sigma, s)
        })
        .collect();
    let stable_trials = outcomes.iter().filter(|o| o.stable).count();
    Ok(StabilityReport {
        reference_centers: reference,
        trials: outcomes,
        stable_trials,
    })
}
