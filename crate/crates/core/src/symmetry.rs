//! Symmetry-aware rotation error, aggregate metrics and the projection
//! rule that fixes the sign of a canonical frame.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, UnitQuaternion, Vec3};

pub const DEFAULT_DISCRETIZATION: usize = 36;

/// Threshold below which an instance counts as a hit for mAP.
pub const MAP_THRESHOLD_DEG: f64 = 5.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SymmetrySpec {
    #[default]
    None,
    Cyclic { order: usize, axis: Vec3 },
    Continuous { axis: Vec3, discretization: usize },
}

impl SymmetrySpec {
    pub fn cyclic(order: usize, axis: Vec3) -> Self {
        SymmetrySpec::Cyclic {
            order,
            axis: axis.normalized().unwrap_or(Vec3::Z),
        }
    }

    pub fn continuous(axis: Vec3) -> Self {
        SymmetrySpec::Continuous {
            axis: axis.normalized().unwrap_or(Vec3::Z),
            discretization: DEFAULT_DISCRETIZATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SymmetrySpec::None => Ok(()),
            SymmetrySpec::Cyclic { order, axis } => {
                if *order < 2 {
                    return Err(Error::Schema("symmetry.order".into()));
                }
                axis.normalized().ok_or_else(|| Error::Schema("symmetry.axis".into()))?;
                Ok(())
            }
            SymmetrySpec::Continuous {
                axis,
                discretization,
            } => {
                if *discretization < 4 {
                    return Err(Error::Schema("symmetry.discretization".into()));
                }
                axis.normalized().ok_or_else(|| Error::Schema("symmetry.axis".into()))?;
                Ok(())
            }
        }
    }

    /// The rotations `s` under which the object is (treated as) unchanged.
    pub fn rotations(&self) -> Vec<UnitQuaternion> {
        let spin = |axis: Vec3, n: usize| {
            (0..n)
                .map(|k| UnitQuaternion::from_axis_angle_deg(axis, 360.0 * k as f64 / n as f64))
                .collect()
        };
        match self {
            SymmetrySpec::None => vec![UnitQuaternion::IDENTITY],
            SymmetrySpec::Cyclic { order, axis } => spin(*axis, *order),
            SymmetrySpec::Continuous {
                axis,
                discretization,
            } => spin(*axis, *discretization),
        }
    }
}

/// All rotations equivalent to `q_gt` under the object symmetry:
/// `{q_gt ⊗ s}`.
pub fn expand_ground_truth(q_gt: &UnitQuaternion, sym: &SymmetrySpec) -> Vec<UnitQuaternion> {
    sym.rotations().iter().map(|s| q_gt.compose(s)).collect()
}

pub fn symmetry_error_degrees(q_est: &UnitQuaternion, gt_set: &[UnitQuaternion]) -> Result<f64> {
    gt_set
        .iter()
        .map(|g| q_est.geodesic_deg(g))
        .reduce(f64::min)
        .ok_or(Error::EmptySet)
}

/// Resolves the sign ambiguity of `frame` from the cloud itself.
///
/// Points are expressed in the frame and summed per axis (the signed
/// distances to the three coordinate planes). Axes whose sum is negative
/// are flipped. Flipping one or three axes would be a reflection, so in
/// that case the flip decision of the axis with the smallest `|sum|` is
/// toggled. The flip is applied as a half-turn post-multiplied onto the
/// frame.
pub fn orient_by_projection(cloud: &PointCloud, frame: &UnitQuaternion) -> Result<UnitQuaternion> {
    let sums = projection_sums(cloud, frame);
    for (axis, &sum) in sums.iter().enumerate() {
        if sum.abs() < 1e-9 {
            return Err(Error::DegenerateProjection { axis, sum });
        }
    }
    let mut flip = [sums[0] < 0.0, sums[1] < 0.0, sums[2] < 0.0];
    if flip.iter().filter(|&&f| f).count() % 2 == 1 {
        let weakest = (0..3)
            .min_by(|&a, &b| sums[a].abs().total_cmp(&sums[b].abs()))
            .expect("three axes");
        flip[weakest] = !flip[weakest];
    }
    let keep = match flip {
        [false, false, false] => return Ok(*frame),
        [true, true, false] => Vec3::Z,
        [true, false, true] => Vec3::Y,
        [false, true, true] => Vec3::X,
        _ => unreachable!("flip count is even"),
    };
    Ok(frame.compose(&UnitQuaternion::from_axis_angle_deg(keep, 180.0)))
}

/// Per-axis sums of the point coordinates expressed in `frame`.
pub fn projection_sums(cloud: &PointCloud, frame: &UnitQuaternion) -> [f64; 3] {
    let inv = frame.inverse();
    let mut s = [0.0; 3];
    for &p in cloud.points() {
        let l = inv.rotate(p);
        s[0] += l.x;
        s[1] += l.y;
        s[2] += l.z;
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub rotation: UnitQuaternion,
    pub symmetry: SymmetrySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceError {
    pub id: String,
    pub deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub map_5deg: f64,
    #[serde(rename = "errors")]
    pub per_instance_errors: Vec<InstanceError>,
}

impl EvalReport {
    /// Aggregates a list of per-instance errors. The median of an even
    /// count is the lower of the two middle values.
    pub fn from_errors(per_instance_errors: Vec<InstanceError>) -> Result<Self> {
        if per_instance_errors.is_empty() {
            return Err(Error::EmptySet);
        }
        let count = per_instance_errors.len();
        let mut sorted: Vec<f64> = per_instance_errors.iter().map(|e| e.deg).collect();
        sorted.sort_by(f64::total_cmp);
        let mean_deg = sorted.iter().sum::<f64>() / count as f64;
        let median_deg = sorted[(count - 1) / 2];
        let hits = sorted.iter().filter(|&&d| d < MAP_THRESHOLD_DEG).count();
        Ok(EvalReport {
            count,
            mean_deg,
            median_deg,
            map_5deg: hits as f64 / count as f64,
            per_instance_errors,
        })
    }
}

pub fn evaluate(estimates: &[(String, UnitQuaternion)], ground_truths: &[GroundTruth]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &GroundTruth> =
        ground_truths.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut errors = Vec::with_capacity(estimates.len());
    for (id, q) in estimates {
        let gt = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::MissingGroundTruth(id.clone()))?;
        let set = expand_ground_truth(&gt.rotation, &gt.symmetry);
        errors.push(InstanceError {
            id: id.clone(),
            deg: symmetry_error_degrees(q, &set)?,
        });
    }
    EvalReport::from_errors(errors)
}
