use rand::Rng;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Triangle soup with zero-based vertex indices. Faces with (near-)zero
/// area are dropped at construction; [`TriangleMesh::dropped_faces`]
/// reports how many.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    dropped: usize,
}

fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * (b - a).cross(c - a).norm()
}

fn is_degenerate(a: Vec3, b: Vec3, c: Vec3) -> bool {
    let longest = (b - a)
        .norm_squared()
        .max((c - a).norm_squared())
        .max((c - b).norm_squared());
    let area = triangle_area(a, b, c);
    !(area > 1e-12 * longest) || longest == 0.0
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mesh vertex"));
        }
        let n = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for f in faces {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: bad, len: n });
            }
            if is_degenerate(vertices[f[0]], vertices[f[1]], vertices[f[2]]) {
                dropped += 1;
            } else {
                kept.push(f);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} zero-area faces");
        }
        Ok(TriangleMesh {
            vertices,
            faces: kept,
            dropped,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn dropped_faces(&self) -> usize {
        self.dropped
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// Draws `count` points uniformly by area from the mesh surface.
pub fn sample_surface_points(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<PointCloud> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r: f64 = rng.random::<f64>() * total;
        let f = cumulative
            .partition_point(|&c| c <= r)
            .min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.faces[f];
        let (a, b, c) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let s: f64 = rng.random::<f64>().sqrt();
        let t: f64 = rng.random();
        out.push(a * (1.0 - s) + b * (s * (1.0 - t)) + c * (s * t));
    }
    PointCloud::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::box_mesh;

    #[test]
    fn single_triangle_samples_stay_on_it() {
        let m = TriangleMesh::new(
            vec![Vec3::ZERO, Vec3::X, Vec3::Y],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let c = sample_surface_points(&m, 3, 7).unwrap();
        assert_eq!(c.len(), 3);
        for p in c.points() {
            assert!(p.z.abs() < 1e-9);
            assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.x + p.y <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn zero_area_mesh_is_empty() {
        let m = TriangleMesh::new(vec![Vec3::ZERO, Vec3::X, Vec3::X * 2.0], vec![[0, 1, 2]]);
        assert!(matches!(m, Err(Error::EmptyMesh)));
        assert!(matches!(
            TriangleMesh::new(vec![Vec3::ZERO], vec![[0, 0, 3]]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn box_faces_sampled_by_area() {
        // 1 x 2 x 3 box: face-pair areas 6, 3, 2 out of 22
        let m = box_mesh(1.0, 2.0, 3.0);
        let n = 6000;
        let c = sample_surface_points(&m, n, 1).unwrap();
        let half = [0.5, 1.0, 1.5];
        let mut counts = [[0usize; 2]; 3];
        for p in c.points() {
            for axis in 0..3 {
                if (p[axis].abs() - half[axis]).abs() < 1e-9 {
                    counts[axis][(p[axis] > 0.0) as usize] += 1;
                }
            }
        }
        let areas = [2.0 * 3.0, 1.0 * 3.0, 1.0 * 2.0];
        let total = 2.0 * (areas[0] + areas[1] + areas[2]);
        for axis in 0..3 {
            for side in 0..2 {
                let frac = counts[axis][side] as f64 / n as f64;
                let expected = areas[axis] / total;
                assert!((frac - expected).abs() < 0.03, "axis {axis} side {side}: {frac} vs {expected}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = box_mesh(1.0, 0.3, 0.2);
        assert_eq!(
            sample_surface_points(&m, 100, 4).unwrap(),
            sample_surface_points(&m, 100, 4).unwrap()
        );
    }
}
