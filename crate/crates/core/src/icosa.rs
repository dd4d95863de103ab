//! The 60-element rotation group of the regular icosahedron, used as the
//! set of discrete rotation modes, plus decomposition of arbitrary
//! rotations into `residual ⊗ mode`.
//!
//! Orientation: two icosahedron vertices lie on the z-axis, the upper
//! vertex ring starts on the +x half of the xz-plane. Element 0 is the
//! identity; the rest are sorted by rotation angle, then by rotation axis
//! (lexicographic on x, y, z), with axes taken from the canonical
//! quaternion. Resulting angles are 72° (12), 120° (20), 144° (12) and
//! 180° (15).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_rotation_with, UnitQuaternion, Vec3};
use crate::rng::seeded;

pub const GROUP_ORDER: usize = 60;

/// Residual rotation bound implied by the `q_w > cos(π/10)` constraint.
pub const RESIDUAL_BOUND_DEG: f64 = 36.0;

#[derive(Clone, Debug)]
pub struct IcosaGroup {
    elements: Vec<UnitQuaternion>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationDecomposition {
    pub mode_index: usize,
    pub residual: UnitQuaternion,
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let h = 1.0 / 5f64.sqrt();
    let r = 2.0 * h;
    let mut v = vec![Vec3::Z];
    for k in 0..5 {
        let t = (72.0 * k as f64).to_radians();
        v.push(Vec3::new(r * t.cos(), r * t.sin(), h));
    }
    for k in 0..5 {
        let t = (72.0 * k as f64 + 36.0).to_radians();
        v.push(Vec3::new(r * t.cos(), r * t.sin(), -h));
    }
    v.push(-Vec3::Z);
    let upper = |k: usize| 1 + k % 5;
    let lower = |k: usize| 6 + k % 5;
    let mut faces = Vec::new();
    for k in 0..5 {
        faces.push([0, upper(k), upper(k + 1)]);
        faces.push([11, lower(k), lower(k + 1)]);
        faces.push([upper(k), lower(k), upper(k + 1)]);
        faces.push([lower(k), upper(k + 1), lower(k + 1)]);
    }
    (v, faces)
}

fn half_turn(axis: Vec3) -> UnitQuaternion {
    let a = axis.normalized().expect("edge axis");
    UnitQuaternion::new_normalize(0.0, clean(a.x), clean(a.y), clean(a.z))
}

impl IcosaGroup {
    pub fn new() -> Self {
        let (verts, faces) = icosahedron();
        let mut candidates = Vec::new();
        for &v in &verts {
            for k in 1..5 {
                candidates.push(UnitQuaternion::from_axis_angle_deg(v, 72.0 * k as f64));
            }
        }
        for f in &faces {
            let c = verts[f[0]] + verts[f[1]] + verts[f[2]];
            candidates.push(UnitQuaternion::from_axis_angle_deg(c, 120.0));
            candidates.push(UnitQuaternion::from_axis_angle_deg(c, -120.0));
        }
        for f in &faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                candidates.push(half_turn(verts[a] + verts[b]));
            }
        }
        let mut unique: Vec<UnitQuaternion> = Vec::new();
        for q in candidates {
            if !unique.iter().any(|u| u.geodesic_deg(&q) < 1e-6) {
                unique.push(q);
            }
        }
        let key = |q: &UnitQuaternion| {
            let axis = q.axis().unwrap_or(Vec3::ZERO);
            (
                (q.angle_deg() * 1e6).round() as i64,
                (axis.x * 1e9).round() as i64,
                (axis.y * 1e9).round() as i64,
                (axis.z * 1e9).round() as i64,
            )
        };
        unique.sort_by_key(key);
        let mut elements = vec![UnitQuaternion::IDENTITY];
        elements.extend(unique);
        debug_assert_eq!(elements.len(), GROUP_ORDER);
        IcosaGroup { elements }
    }

    pub fn elements(&self) -> &[UnitQuaternion] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<UnitQuaternion> {
        self.elements
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.elements.len(),
            })
    }

    /// Index of the element nearest to `q` by geodesic angle (lowest index
    /// on ties) and the residual `Δq = q ⊗ g⁻¹`, so `Δq ⊗ g = q`.
    pub fn nearest(&self, q: &UnitQuaternion) -> RotationDecomposition {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, g) in self.elements.iter().enumerate() {
            let d = q.dot(g).abs();
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        RotationDecomposition {
            mode_index: best,
            residual: q.compose(&self.elements[best].inverse()),
        }
    }

    /// `delta ⊗ G[mode_index]`: the residual applied after the mode.
    pub fn compose(&self, mode_index: usize, delta: &UnitQuaternion) -> Result<UnitQuaternion> {
        Ok(delta.compose(&self.get(mode_index)?))
    }

    /// Largest distance from any pairwise product to its nearest element.
    pub fn closure_residual_deg(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.elements {
            for b in &self.elements {
                let p = a.compose(b);
                let d = self
                    .elements
                    .iter()
                    .map(|g| g.geodesic_deg(&p))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest distance from any element's inverse to its nearest element.
    pub fn inverse_residual_deg(&self) -> f64 {
        self.elements
            .iter()
            .map(|a| {
                let inv = a.inverse();
                self.elements
                    .iter()
                    .map(|g| g.geodesic_deg(&inv))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest pairwise geodesic angle between distinct elements.
    pub fn min_separation_deg(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (i, a) in self.elements.iter().enumerate() {
            for b in &self.elements[i + 1..] {
                m = m.min(a.geodesic_deg(b));
            }
        }
        m
    }

    /// Monte-Carlo estimate of the covering radius: the largest distance
    /// from `samples` Haar-uniform rotations to their nearest mode.
    pub fn covering_radius_estimate(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        (0..samples)
            .map(|_| {
                let q = random_rotation_with(&mut rng);
                self.nearest(&q).residual.angle_deg()
            })
            .fold(0.0, f64::max)
    }
}

impl Default for IcosaGroup {
    fn default() -> Self {
        Self::new()
    }
}

pub fn build_icosahedral_group() -> IcosaGroup {
    IcosaGroup::new()
}

pub fn nearest_group_element(q: &UnitQuaternion, group: &IcosaGroup) -> RotationDecomposition {
    group.nearest(q)
}

pub fn compose_mode_and_delta(
    group: &IcosaGroup,
    mode_index: usize,
    delta: &UnitQuaternion,
) -> Result<UnitQuaternion> {
    group.compose(mode_index, delta)
}

/// Exact covering radius of the 60 modes in degrees: the largest
/// nearest-mode residual angle any rotation can have. Attained at the
/// centers of the tetrahedral cells of the 600-cell formed by the 120
/// lifted unit quaternions, whose edges subtend `c = cos 36°`.
pub fn covering_radius_deg() -> f64 {
    let c = (36.0f64).to_radians().cos();
    2.0 * ((1.0 + 3.0 * c) / (4.0 + 12.0 * c).sqrt()).acos().to_degrees()
}

/// Logistic function with the input clamped to `[-500, 500]`.
pub fn sigmoid(s: f64) -> f64 {
    let s = s.clamp(-500.0, 500.0);
    1.0 / (1.0 + (-s).exp())
}

/// Lower bound on the scalar part of a residual quaternion, `cos(π/10)`.
pub fn residual_w_floor() -> f64 {
    (PI / 10.0).cos()
}

/// Maps unconstrained network outputs to a residual quaternion with
/// `w = cos(π/10) + (1 - cos(π/10))·sigmoid(raw_scale)` and the vector
/// part along `raw_axis`, so the rotation angle stays below π/5.
/// A (near-)zero axis falls back to +z.
pub fn constrain_delta(raw_scale: f64, raw_axis: Vec3) -> UnitQuaternion {
    let c = residual_w_floor();
    let w = c + (1.0 - c) * sigmoid(raw_scale);
    let axis = raw_axis.normalized().unwrap_or(Vec3::Z);
    let s = (1.0 - w * w).max(0.0).sqrt();
    UnitQuaternion::new_normalize(w, s * axis.x, s * axis.y, s * axis.z)
}

/// Shrinks `delta` along its own axis so its angle is at most `max_deg`.
pub fn clamp_residual(delta: &UnitQuaternion, max_deg: f64) -> UnitQuaternion {
    if delta.angle_deg() <= max_deg {
        return *delta;
    }
    match delta.axis() {
        Some(axis) => UnitQuaternion::from_axis_angle_deg(axis, max_deg),
        None => *delta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;

    #[test]
    fn sixty_distinct_elements_with_identity_first() {
        let g = IcosaGroup::new();
        assert_eq!(g.len(), 60);
        assert_eq!(g.elements()[0], UnitQuaternion::IDENTITY);
        assert!(g.min_separation_deg() > 1e-6);
    }

    #[test]
    fn angle_census() {
        let g = IcosaGroup::new();
        let mut counts = std::collections::BTreeMap::new();
        for q in g.elements() {
            *counts.entry(q.angle_deg().round() as i64).or_insert(0) += 1;
        }
        let expected: Vec<(i64, i32)> = vec![(0, 1), (72, 12), (120, 20), (144, 12), (180, 15)];
        assert_eq!(counts.into_iter().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn min_nonzero_angle_is_72() {
        // brute-force scan of all element angles
        let g = IcosaGroup::new();
        let m = g.elements()[1..]
            .iter()
            .map(|q| q.angle_deg())
            .fold(f64::INFINITY, f64::min);
        assert!((m - 72.0).abs() < 1e-6);
    }

    #[test]
    fn closed_under_products_and_inverses() {
        let g = IcosaGroup::new();
        assert!(g.closure_residual_deg() < 1e-6);
        assert!(g.inverse_residual_deg() < 1e-6);
    }

    #[test]
    fn ordering_is_stable() {
        let a = IcosaGroup::new();
        let b = IcosaGroup::new();
        assert_eq!(a.elements(), b.elements());
        let angles: Vec<f64> = a.elements().iter().map(|q| q.angle_deg()).collect();
        assert!(angles.windows(2).all(|w| w[0] <= w[1] + 1e-6));
    }

    #[test]
    fn members_decompose_to_themselves() {
        let g = IcosaGroup::new();
        for (i, q) in g.elements().iter().enumerate() {
            let d = g.nearest(q);
            assert_eq!(d.mode_index, i);
            assert!(d.residual.angle_deg() < 1e-6);
        }
        let q = UnitQuaternion::from_axis_angle_deg(Vec3::Z, 10.0);
        let d = g.nearest(&q);
        assert_eq!(d.mode_index, 0);
        assert!((d.residual.angle_deg() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn decomposition_is_optimal_and_round_trips() {
        let g = IcosaGroup::new();
        for s in 0..1000 {
            let q = random_rotation(s);
            let d = g.nearest(&q);
            let chosen = g.elements()[d.mode_index].geodesic_deg(&q);
            for e in g.elements() {
                assert!(e.geodesic_deg(&q) >= chosen - 1e-9);
            }
            let back = g.compose(d.mode_index, &d.residual).unwrap();
            assert!(back.geodesic_deg(&q) < 1e-6);
        }
        assert!(matches!(
            g.compose(60, &UnitQuaternion::IDENTITY),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn compose_with_identity_mode_and_delta() {
        let g = IcosaGroup::new();
        assert_eq!(g.compose(17, &UnitQuaternion::IDENTITY).unwrap(), g.elements()[17]);
        let d = UnitQuaternion::from_axis_angle_deg(Vec3::X, 20.0);
        assert!(g.compose(0, &d).unwrap().geodesic_deg(&d) < 1e-12);
    }

    #[test]
    fn constrain_delta_values() {
        let c = residual_w_floor();
        assert!((c - 0.951_056_516_295_153_6).abs() < 1e-15);
        // sigmoid(0) = 1/2 -> w = (1 + cos(pi/10)) / 2
        let mid = constrain_delta(0.0, Vec3::Z);
        assert!((mid.w() - 0.975_528_258_147_576_8).abs() < 1e-12);
        assert!(mid.x().abs() < 1e-15 && mid.y().abs() < 1e-15);
        let lo = constrain_delta(-1e6, Vec3::X);
        assert!((lo.w() - c).abs() < 1e-9);
        assert!((lo.angle_deg() - 36.0).abs() < 1e-6);
        let hi = constrain_delta(1e6, Vec3::X);
        assert!((hi.w() - 1.0).abs() < 1e-9);
        // zero axis falls back to +z
        let z = constrain_delta(-2.0, Vec3::ZERO);
        assert!(z.x() == 0.0 && z.y() == 0.0 && z.z() > 0.0);
    }

    #[test]
    fn clamp_residual_caps_angle() {
        let d = UnitQuaternion::from_axis_angle_deg(Vec3::new(1.0, 1.0, 0.0), 37.2);
        let c = clamp_residual(&d, 35.999);
        assert!((c.angle_deg() - 35.999).abs() < 1e-9);
        assert!((c.axis().unwrap() - d.axis().unwrap()).norm() < 1e-12);
    }

    /// The lifted modes are the 600-cell vertices; a cell is a regular
    /// spherical tetrahedron with quaternion edge 36 deg, and its centre
    /// is a deepest hole.
    #[test]
    fn deep_hole_matches_cell_geometry() {
        let g = IcosaGroup::new();
        let lifted: Vec<[f64; 4]> = g
            .elements()
            .iter()
            .flat_map(|q| {
                let a = q.to_array();
                [a, a.map(|v| -v)]
            })
            .collect();
        let c = (36.0f64).to_radians().cos();
        let dot = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let adj = |a: &[f64; 4], b: &[f64; 4]| (dot(a, b) - c).abs() < 1e-9;
        let v0 = lifted[0];
        let mut cell = None;
        'search: for (i, a) in lifted.iter().enumerate() {
            for (j, b) in lifted.iter().enumerate().skip(i + 1) {
                for d in lifted.iter().skip(j + 1) {
                    if adj(&v0, a) && adj(&v0, b) && adj(&v0, d) && adj(a, b) && adj(a, d) && adj(b, d) {
                        cell = Some([v0, *a, *b, *d]);
                        break 'search;
                    }
                }
            }
        }
        let cell = cell.expect("a tetrahedral cell");
        let mut s = [0.0; 4];
        for v in &cell {
            for k in 0..4 {
                s[k] += v[k];
            }
        }
        let hole = UnitQuaternion::new_normalize(s[0], s[1], s[2], s[3]);
        let expected = covering_radius_deg();
        assert!((expected - 44.4775).abs() < 1e-3);
        let got = g.nearest(&hole).residual.angle_deg();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        // sampling never exceeds the deepest hole
        assert!(g.covering_radius_estimate(20_000, 3) <= expected + 1e-9);
    }
}
