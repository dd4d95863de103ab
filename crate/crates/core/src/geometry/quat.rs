use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Tolerance used when accepting externally supplied quaternions.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Rotation quaternion `w + xi + yj + zk` kept at unit norm and in
/// canonical sign: `w >= 0`, and when `w == 0` the first nonzero vector
/// component is positive. `q` and `-q` encode the same rotation, so the
/// canonical form makes equality and file round-trips well defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Normalizes and canonicalizes arbitrary nonzero components.
    ///
    /// Panics if the components are zero or not finite; use [`try_new`]
    /// for untrusted input.
    ///
    /// [`try_new`]: UnitQuaternion::try_new
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(
            n.is_finite() && n > 1e-300,
            "cannot normalize quaternion ({w}, {x}, {y}, {z})"
        );
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    /// Accepts components whose norm is within [`UNIT_TOLERANCE`] of one.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n2 = w * w + x * x + y * y + z * z;
        let n = n2.sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion(n));
        }
        if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
            // already unit to rounding; keep the bits
            Ok(Self::canonical(w, x, y, z))
        } else {
            Ok(Self::canonical(w / n, x / n, y / n, z / n))
        }
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        if flip {
            UnitQuaternion {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            UnitQuaternion { w, x, y, z }
        }
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule).
    /// A zero axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Self::IDENTITY;
        };
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new_normalize(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn from_axis_angle_deg(axis: Vec3, degrees: f64) -> Self {
        Self::from_axis_angle(axis, degrees.to_radians())
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }
    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }
    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }
    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, o: &UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ rhs`: applies `rhs` first, then `self`.
    pub fn compose(&self, rhs: &UnitQuaternion) -> Self {
        let [w, x, y, z] = hamilton(self.to_array(), rhs.to_array());
        Self::new_normalize(w, x, y, z)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle().to_degrees()
    }

    /// Unit rotation axis, or `None` for the identity.
    pub fn axis(&self) -> Option<Vec3> {
        self.vector().normalized()
    }

    /// Geodesic angle between the two rotations, in degrees `[0, 180]`.
    pub fn geodesic_deg(&self, o: &UnitQuaternion) -> f64 {
        if self == o {
            return 0.0;
        }
        let [w, x, y, z] = hamilton(self.inverse().to_array(), o.to_array());
        let v = (x * x + y * y + z * z).sqrt();
        (2.0 * v.atan2(w.abs())).to_degrees()
    }

    #[inline]
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;
    fn try_from(a: [f64; 4]) -> Result<Self> {
        Self::try_new(a[0], a[1], a[2], a[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

/// Raw Hamilton product on `[w, x, y, z]` arrays.
#[inline]
pub fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn quat_compose(a: &UnitQuaternion, b: &UnitQuaternion) -> UnitQuaternion {
    a.compose(b)
}

pub fn quat_geodesic_degrees(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    a.geodesic_deg(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_quat() -> impl Strategy<Value = UnitQuaternion> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::new_normalize(w, x, y, z))
    }

    #[test]
    fn compose_identity_and_same_axis() {
        let a = UnitQuaternion::from_axis_angle_deg(Vec3::new(1.0, 2.0, 3.0), 33.0);
        assert_eq!(a.compose(&UnitQuaternion::IDENTITY), a);
        let r90 = UnitQuaternion::from_axis_angle_deg(Vec3::Z, 90.0);
        let r180 = UnitQuaternion::from_axis_angle_deg(Vec3::Z, 180.0);
        assert!(r90.compose(&r90).geodesic_deg(&r180) < 1e-9);
        assert!(a.compose(&a.inverse()).geodesic_deg(&UnitQuaternion::IDENTITY) < 1e-12);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let rx = UnitQuaternion::from_axis_angle_deg(Vec3::X, 90.0);
        let rz = UnitQuaternion::from_axis_angle_deg(Vec3::Z, 90.0);
        // x-axis: rz sends it to y, then rx sends y to z
        let p = rx.compose(&rz).rotate(Vec3::X);
        assert!((p - Vec3::Z).norm() < 1e-12);
    }

    #[test]
    fn geodesic_closed_forms() {
        let a = UnitQuaternion::from_axis_angle_deg(Vec3::new(0.3, -1.0, 0.2), 71.0);
        assert_eq!(a.geodesic_deg(&a), 0.0);
        let r10 = UnitQuaternion::from_axis_angle_deg(Vec3::Z, 10.0);
        assert!((UnitQuaternion::IDENTITY.geodesic_deg(&r10) - 10.0).abs() < 1e-9);
        // -a has the same canonical form but check the raw double cover too
        let neg = UnitQuaternion {
            w: -a.w,
            x: -a.x,
            y: -a.y,
            z: -a.z,
        };
        assert!(a.geodesic_deg(&neg) < 1e-12);
    }

    #[test]
    fn canonical_sign_rules() {
        let q = UnitQuaternion::new_normalize(-0.5, 0.5, 0.5, 0.5);
        assert!(q.w() > 0.0);
        let h = UnitQuaternion::new_normalize(0.0, 0.0, -1.0, 0.0);
        assert_eq!(h.to_array(), [0.0, 0.0, 1.0, 0.0]);
        assert!(UnitQuaternion::try_new(1.0, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let q = UnitQuaternion::from_axis_angle(Vec3::new(0.2, 0.9, -0.4), 2.2);
        let s = serde_json::to_string(&q).unwrap();
        let back: UnitQuaternion = serde_json::from_str(&s).unwrap();
        assert_eq!(q, back);
        assert!(serde_json::from_str::<UnitQuaternion>("[1.0, 1.0, 0.0, 0.0]").is_err());
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in arb_quat(), b in arb_quat(), c in arb_quat()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            for (u, v) in l.to_array().iter().zip(r.to_array()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn geodesic_triangle_inequality(a in arb_quat(), b in arb_quat(), c in arb_quat()) {
            let ab = a.geodesic_deg(&b);
            let bc = b.geodesic_deg(&c);
            let ac = a.geodesic_deg(&c);
            prop_assert!(ac <= ab + bc + 1e-6);
            prop_assert!((ab - b.geodesic_deg(&a)).abs() < 1e-9);
        }

        #[test]
        fn rotate_matches_matrix(q in arb_quat(), x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
            let v = Vec3::new(x, y, z);
            let m = q.to_matrix();
            let r = q.rotate(v);
            for i in 0..3 {
                let mv = m[i][0] * x + m[i][1] * y + m[i][2] * z;
                prop_assert!((mv - r[i]).abs() < 1e-12);
            }
        }
    }
}
