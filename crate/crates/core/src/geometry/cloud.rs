use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{UnitQuaternion, Vec3};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// An ordered, non-empty list of finite 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    /// Sub-cloud made of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.points.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.points.len(),
                });
            }
            out.push(self.points[i]);
        }
        PointCloud::new(out)
    }

    pub fn map(&self, mut f: impl FnMut(Vec3) -> Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn translate(&self, t: Vec3) -> PointCloud {
        self.map(|p| p + t)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (lo, hi)
    }
}

/// Rigid pose `p -> rotation·p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion,
    pub translation: Vec3,
}

impl Pose {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }
}

/// What [`normalize`] removed: `normalized = (p - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub center: Vec3,
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub sigma: f64,
    pub seed: u64,
}

pub fn centroid(cloud: &PointCloud) -> Vec3 {
    Vec3::mean(cloud.points())
}

/// Centers the cloud at its mean and divides by the largest axis extent,
/// so the output has zero mean and a maximum axis range of one.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, NormalizationRecord)> {
    if cloud.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            available: cloud.len(),
        });
    }
    let center = centroid(cloud);
    let centered = cloud.map(|p| p - center);
    let (lo, hi) = centered.bounds();
    let ext = hi - lo;
    let scale = ext.x.max(ext.y).max(ext.z);
    if scale.is_nan() || scale < 1e-12 {
        return Err(Error::DegenerateCloud("zero coordinate range"));
    }
    Ok((centered.map(|p| p / scale), NormalizationRecord { center, scale }))
}

/// Rotates every point about `center`: `p -> q(p - center)q⁻¹ + center`.
pub fn apply_rotation(cloud: &PointCloud, q: &UnitQuaternion, center: Vec3) -> PointCloud {
    cloud.map(|p| q.rotate(p - center) + center)
}

/// Adds i.i.d. N(0, sigma²) offsets to every coordinate.
pub fn perturb(cloud: &PointCloud, cfg: &PerturbationConfig) -> Result<PointCloud> {
    if !(cfg.sigma >= 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be finite and >= 0, got {}",
            cfg.sigma
        )));
    }
    if cfg.sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, cfg.sigma).expect("validated sigma");
    let mut rng = seeded(cfg.seed);
    Ok(cloud.map(|p| {
        let dx = normal.sample(&mut rng);
        let dy = normal.sample(&mut rng);
        let dz = normal.sample(&mut rng);
        p + Vec3::new(dx, dy, dz)
    }))
}

/// Haar-uniform rotation drawn from `rng` (Shoemake's subgroup method).
pub fn random_rotation_with<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let tau = std::f64::consts::TAU;
    let (s2, c2) = (tau * u2).sin_cos();
    let (s3, c3) = (tau * u3).sin_cos();
    UnitQuaternion::new_normalize(b * c3, a * s2, a * c2, b * s3)
}

pub fn random_rotation(seed: u64) -> UnitQuaternion {
    random_rotation_with(&mut seeded(seed))
}

/// Random reordering. Returns the shuffled cloud and `perm` with
/// `shuffled[k] == cloud[perm[k]]`.
pub fn shuffle(cloud: &PointCloud, seed: u64) -> (PointCloud, Vec<usize>) {
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    perm.shuffle(&mut seeded(seed));
    let points = perm.iter().map(|&i| cloud.points[i]).collect();
    (PointCloud { points }, perm)
}

/// Index of the point farthest from the centroid (lowest index on ties).
/// Used as the default farthest-point-sampling seed.
pub fn farthest_from_centroid(cloud: &PointCloud) -> usize {
    let c = centroid(cloud);
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, p) in cloud.points().iter().enumerate() {
        let d = p.distance_squared(c);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Greedy farthest point sampling starting at `start_index`.
///
/// Each step picks the point with the largest distance to the already
/// selected set (lowest index on ties). Indices are returned in selection
/// order.
pub fn farthest_point_sample(
    cloud: &PointCloud,
    n: usize,
    start_index: usize,
) -> Result<(PointCloud, Vec<usize>)> {
    let len = cloud.len();
    if n > len {
        return Err(Error::TooFewPoints {
            needed: n,
            available: len,
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    if start_index >= len {
        return Err(Error::IndexOutOfRange {
            index: start_index,
            len,
        });
    }
    let pts = cloud.points();
    let mut min_d = vec![f64::INFINITY; len];
    let mut picked = Vec::with_capacity(n);
    let mut current = start_index;
    for _ in 0..n {
        picked.push(current);
        let c = pts[current];
        min_d[current] = f64::NEG_INFINITY;
        let mut next = usize::MAX;
        let mut next_d = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let md = &mut min_d[i];
            if *md != f64::NEG_INFINITY {
                let d = p.distance_squared(c);
                if d < *md {
                    *md = d;
                }
                if *md > next_d {
                    next_d = *md;
                    next = i;
                }
            }
        }
        current = next;
    }
    let out = PointCloud {
        points: picked.iter().map(|&i| pts[i]).collect(),
    };
    Ok((out, picked))
}
