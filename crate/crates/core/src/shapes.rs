//! Procedural meshes standing in for a CAD model library.
//!
//! Every generator returns a [`TriangleMesh`] centred near the origin.
//! [`procedural_corpus`] draws a reproducible mix of families with
//! jittered proportions, each tagged with its rotational symmetry.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{TriangleMesh, UnitQuaternion, Vec3};
use crate::rng::seeded;
use crate::symmetry::SymmetrySpec;

const SEGMENTS: usize = 48;

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl MeshBuilder {
    fn vertex(&mut self, v: Vec3) -> usize {
        self.vertices.push(v);
        self.vertices.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        self.faces.push([a, b, c]);
    }

    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.tri(a, b, c);
        self.tri(a, c, d);
    }

    fn append(&mut self, mesh: &TriangleMesh, rotation: UnitQuaternion, offset: Vec3) {
        let base = self.vertices.len();
        self.vertices
            .extend(mesh.vertices().iter().map(|&v| rotation.rotate(v) + offset));
        self.faces
            .extend(mesh.faces().iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }

    fn build(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.faces).expect("generated mesh has area")
    }
}

/// Axis-aligned box with full side lengths `sx, sy, sz`.
pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriangleMesh {
    let mut b = MeshBuilder::default();
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let mut v = [0usize; 8];
    for (i, slot) in v.iter_mut().enumerate() {
        let x = if i & 1 == 0 { -hx } else { hx };
        let y = if i & 2 == 0 { -hy } else { hy };
        let z = if i & 4 == 0 { -hz } else { hz };
        *slot = b.vertex(Vec3::new(x, y, z));
    }
    b.quad(v[0], v[2], v[3], v[1]);
    b.quad(v[4], v[5], v[7], v[6]);
    b.quad(v[0], v[1], v[5], v[4]);
    b.quad(v[2], v[6], v[7], v[3]);
    b.quad(v[0], v[4], v[6], v[2]);
    b.quad(v[1], v[3], v[7], v[5]);
    b.build()
}

/// Closed cylinder along z, from `-height/2` to `height/2`.
pub fn cylinder_mesh(radius: f64, height: f64) -> TriangleMesh {
    frustum_mesh(radius, radius, height)
}

/// Closed frustum along z with bottom radius `r0` and top radius `r1`.
/// A zero top radius gives a cone with its apex at `+height/2`.
pub fn frustum_mesh(r0: f64, r1: f64, height: f64) -> TriangleMesh {
    frustum(r0, r1, height, true)
}

/// Cylinder along z with a bottom but no top.
pub fn cup_mesh(radius: f64, height: f64) -> TriangleMesh {
    frustum(radius, radius, height, false)
}

fn frustum(r0: f64, r1: f64, height: f64, top_cap: bool) -> TriangleMesh {
    let mut b = MeshBuilder::default();
    let (z0, z1) = (-height / 2.0, height / 2.0);
    let ring = |b: &mut MeshBuilder, r: f64, z: f64| -> Vec<usize> {
        (0..SEGMENTS)
            .map(|k| {
                let t = TAU * k as f64 / SEGMENTS as f64;
                b.vertex(Vec3::new(r * t.cos(), r * t.sin(), z))
            })
            .collect()
    };
    let bottom = ring(&mut b, r0, z0);
    let c0 = b.vertex(Vec3::new(0.0, 0.0, z0));
    for k in 0..SEGMENTS {
        b.tri(c0, bottom[(k + 1) % SEGMENTS], bottom[k]);
    }
    if r1 > 0.0 {
        let top = ring(&mut b, r1, z1);
        let c1 = b.vertex(Vec3::new(0.0, 0.0, z1));
        for k in 0..SEGMENTS {
            let k1 = (k + 1) % SEGMENTS;
            b.quad(bottom[k], bottom[k1], top[k1], top[k]);
            if top_cap {
                b.tri(c1, top[k], top[k1]);
            }
        }
    } else {
        let apex = b.vertex(Vec3::new(0.0, 0.0, z1));
        for k in 0..SEGMENTS {
            b.tri(bottom[k], bottom[(k + 1) % SEGMENTS], apex);
        }
    }
    b.build()
}

pub fn cone_mesh(radius: f64, height: f64) -> TriangleMesh {
    frustum_mesh(radius, 0.0, height)
}

/// Ellipsoid with semi-axes `a, b, c` as a latitude/longitude grid.
pub fn ellipsoid_mesh(a: f64, bb: f64, c: f64) -> TriangleMesh {
    let stacks = 24;
    let mut b = MeshBuilder::default();
    let south = b.vertex(Vec3::new(0.0, 0.0, -c));
    let mut rings = Vec::new();
    for s in 1..stacks {
        let phi = -PI / 2.0 + PI * s as f64 / stacks as f64;
        let ring: Vec<usize> = (0..SEGMENTS)
            .map(|k| {
                let t = TAU * k as f64 / SEGMENTS as f64;
                b.vertex(Vec3::new(
                    a * phi.cos() * t.cos(),
                    bb * phi.cos() * t.sin(),
                    c * phi.sin(),
                ))
            })
            .collect();
        rings.push(ring);
    }
    let north = b.vertex(Vec3::new(0.0, 0.0, c));
    for k in 0..SEGMENTS {
        let k1 = (k + 1) % SEGMENTS;
        b.tri(south, rings[0][k1], rings[0][k]);
        let last = rings.len() - 1;
        b.tri(north, rings[last][k], rings[last][k1]);
    }
    for w in rings.windows(2) {
        for k in 0..SEGMENTS {
            let k1 = (k + 1) % SEGMENTS;
            b.quad(w[0][k], w[0][k1], w[1][k1], w[1][k]);
        }
    }
    b.build()
}

/// Open tube swept along a half circle in the xz-plane: a mug handle
/// whose ends sit at `(attach_x, 0, ±reach)`.
fn handle_mesh(attach_x: f64, reach: f64, tube: f64) -> TriangleMesh {
    let steps = 24;
    let sides = 12;
    let mut b = MeshBuilder::default();
    let mut rings = Vec::new();
    for s in 0..=steps {
        let u = -PI / 2.0 + PI * s as f64 / steps as f64;
        let radial = Vec3::new(u.cos(), 0.0, u.sin());
        let center = Vec3::new(attach_x, 0.0, 0.0) + radial * reach;
        let ring: Vec<usize> = (0..sides)
            .map(|k| {
                let v = TAU * k as f64 / sides as f64;
                b.vertex(center + radial * (tube * v.cos()) + Vec3::Y * (tube * v.sin()))
            })
            .collect();
        rings.push(ring);
    }
    for w in rings.windows(2) {
        for k in 0..sides {
            let k1 = (k + 1) % sides;
            b.quad(w[0][k], w[0][k1], w[1][k1], w[1][k]);
        }
    }
    b.build()
}

/// Open-topped cylinder along z with a C-shaped handle on the +x side,
/// set slightly above mid-height.
pub fn mug_mesh(radius: f64, height: f64, handle_reach: f64, handle_tube: f64) -> TriangleMesh {
    let mut b = MeshBuilder::default();
    b.append(&cup_mesh(radius, height), UnitQuaternion::IDENTITY, Vec3::ZERO);
    b.append(
        &handle_mesh(radius, handle_reach, handle_tube),
        UnitQuaternion::IDENTITY,
        Vec3::new(0.0, 0.0, 0.1 * height),
    );
    b.build()
}

/// Wide body cylinder with a narrow neck on top.
pub fn bottle_mesh(radius: f64, body: f64, neck_radius: f64, neck: f64) -> TriangleMesh {
    let mut b = MeshBuilder::default();
    let total = body + neck;
    b.append(
        &cylinder_mesh(radius, body),
        UnitQuaternion::IDENTITY,
        Vec3::new(0.0, 0.0, -total / 2.0 + body / 2.0),
    );
    b.append(
        &cylinder_mesh(neck_radius, neck),
        UnitQuaternion::IDENTITY,
        Vec3::new(0.0, 0.0, total / 2.0 - neck / 2.0),
    );
    b.build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Box,
    Cylinder,
    Cone,
    Ellipsoid,
    Bottle,
    Mug,
    Composite,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 7] = [
        ShapeFamily::Box,
        ShapeFamily::Cylinder,
        ShapeFamily::Cone,
        ShapeFamily::Ellipsoid,
        ShapeFamily::Bottle,
        ShapeFamily::Mug,
        ShapeFamily::Composite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Box => "box",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Cone => "cone",
            ShapeFamily::Ellipsoid => "ellipsoid",
            ShapeFamily::Bottle => "bottle",
            ShapeFamily::Mug => "mug",
            ShapeFamily::Composite => "composite",
        }
    }

    pub fn is_asymmetric(self) -> bool {
        matches!(self, ShapeFamily::Mug | ShapeFamily::Composite)
    }
}

#[derive(Clone, Debug)]
pub struct ProceduralShape {
    pub id: String,
    pub family: ShapeFamily,
    pub mesh: TriangleMesh,
    pub symmetry: SymmetrySpec,
}

fn jitter<R: Rng>(rng: &mut R, base: f64, rel: f64) -> f64 {
    base * (1.0 + rel * (2.0 * rng.random::<f64>() - 1.0))
}

/// Draws one shape of `family`; proportions are jittered from `seed`.
pub fn generate(family: ShapeFamily, seed: u64) -> (TriangleMesh, SymmetrySpec) {
    let mut rng = seeded(seed);
    let r = &mut rng;
    match family {
        ShapeFamily::Box => {
            let mesh = box_mesh(1.0, jitter(r, 0.4, 0.25), jitter(r, 0.22, 0.2));
            (mesh, SymmetrySpec::cyclic(2, Vec3::X))
        }
        ShapeFamily::Cylinder => (
            cylinder_mesh(jitter(r, 0.16, 0.3), 1.0),
            SymmetrySpec::continuous(Vec3::Z),
        ),
        ShapeFamily::Cone => (
            cone_mesh(jitter(r, 0.25, 0.3), 1.0),
            SymmetrySpec::continuous(Vec3::Z),
        ),
        ShapeFamily::Ellipsoid => (
            ellipsoid_mesh(jitter(r, 0.2, 0.25), jitter(r, 0.2, 0.25), 0.5),
            SymmetrySpec::cyclic(2, Vec3::Z),
        ),
        ShapeFamily::Bottle => (
            bottle_mesh(jitter(r, 0.16, 0.2), jitter(r, 0.65, 0.1), jitter(r, 0.06, 0.2), 0.3),
            SymmetrySpec::continuous(Vec3::Z),
        ),
        ShapeFamily::Mug => (
            mug_mesh(
                jitter(r, 0.3, 0.1),
                jitter(r, 0.8, 0.1),
                jitter(r, 0.2, 0.1),
                jitter(r, 0.035, 0.15),
            ),
            SymmetrySpec::None,
        ),
        ShapeFamily::Composite => (composite_mesh(r), SymmetrySpec::None),
    }
}

/// Long box body with a cylindrical post and a cone spike at off-centre
/// positions, so no rotation maps the shape onto itself.
fn composite_mesh<R: Rng>(r: &mut R) -> TriangleMesh {
    let (sx, sy, sz) = (1.0, jitter(r, 0.36, 0.2), jitter(r, 0.2, 0.2));
    let mut b = MeshBuilder::default();
    b.append(&box_mesh(sx, sy, sz), UnitQuaternion::IDENTITY, Vec3::ZERO);
    let post_h = jitter(r, 0.3, 0.2);
    b.append(
        &cylinder_mesh(jitter(r, 0.07, 0.2), post_h),
        UnitQuaternion::IDENTITY,
        Vec3::new(jitter(r, 0.3, 0.3), sy * jitter(r, 0.2, 0.5), sz / 2.0 + post_h / 2.0),
    );
    let spike_h = jitter(r, 0.25, 0.2);
    let tilt = UnitQuaternion::from_axis_angle_deg(Vec3::X, -90.0);
    b.append(
        &cone_mesh(jitter(r, 0.08, 0.2), spike_h),
        tilt,
        Vec3::new(-jitter(r, 0.25, 0.3), sy / 2.0 + spike_h / 2.0, -sz * 0.2),
    );
    b.build()
}

/// `count` shapes cycling through `families`, ids `<family>_<nn>`.
pub fn procedural_corpus(families: &[ShapeFamily], count: usize, seed: u64) -> Vec<ProceduralShape> {
    (0..count)
        .map(|i| {
            let family = families[i % families.len()];
            let (mesh, symmetry) = generate(family, crate::rng::derive_seed(seed, i as u64));
            ProceduralShape {
                id: format!("{}_{:03}", family.name(), i),
                family,
                mesh,
                symmetry,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_produce_valid_meshes() {
        for fam in ShapeFamily::ALL {
            for s in 0..3 {
                let (m, _) = generate(fam, s);
                assert!(m.surface_area() > 0.1, "{fam:?}");
                assert_eq!(m.dropped_faces(), 0, "{fam:?}");
            }
        }
    }

    #[test]
    fn box_area() {
        assert!((box_mesh(1.0, 2.0, 3.0).surface_area() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_is_reproducible() {
        let a = procedural_corpus(&ShapeFamily::ALL, 10, 3);
        let b = procedural_corpus(&ShapeFamily::ALL, 10, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.mesh, y.mesh);
        }
    }
}
