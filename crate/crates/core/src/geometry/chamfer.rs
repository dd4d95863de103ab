use super::{PointCloud, Vec3};

/// Structure-of-arrays copy of a cloud, laid out for the exhaustive
/// nearest-neighbour scans below.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
}

impl NeighborTable {
    pub fn new(points: &[Vec3]) -> Self {
        NeighborTable {
            xs: points.iter().map(|p| p.x).collect(),
            ys: points.iter().map(|p| p.y).collect(),
            zs: points.iter().map(|p| p.z).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Squared distance from `q` to its nearest table point.
    #[inline]
    pub fn nearest_sq(&self, q: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        for ((x, y), z) in self.xs.iter().zip(&self.ys).zip(&self.zs) {
            let dx = x - q.x;
            let dy = y - q.y;
            let dz = z - q.z;
            let d = dx * dx + dy * dy + dz * dz;
            best = best.min(d);
        }
        best
    }

    /// Index of the nearest table point (lowest index on ties) and the
    /// squared distance to it.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        let mut best = f64::INFINITY;
        let mut idx = 0;
        for (i, ((x, y), z)) in self.xs.iter().zip(&self.ys).zip(&self.zs).enumerate() {
            let dx = x - q.x;
            let dy = y - q.y;
            let dz = z - q.z;
            let d = dx * dx + dy * dy + dz * dz;
            if d < best {
                best = d;
                idx = i;
            }
        }
        (idx, best)
    }

    /// Mean over `queries` of the squared nearest-neighbour distance.
    ///
    /// The terms are summed in ascending order, so the result does not
    /// depend on the order of `queries` or of the table.
    pub fn mean_nearest_sq(&self, queries: &[Vec3]) -> f64 {
        let mut d: Vec<f64> = queries.iter().map(|&q| self.nearest_sq(q)).collect();
        d.sort_by(f64::total_cmp);
        d.iter().sum::<f64>() / queries.len() as f64
    }
}

/// Symmetric chamfer distance with squared Euclidean nearest-neighbour
/// terms, each direction averaged over its own point count.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    chamfer_points(a.points(), b.points())
}

pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> f64 {
    let ta = NeighborTable::new(a);
    let tb = NeighborTable::new(b);
    chamfer_tables(a, &ta, b, &tb)
}

/// Chamfer distance when neighbour tables for both sides already exist.
pub fn chamfer_tables(a: &[Vec3], ta: &NeighborTable, b: &[Vec3], tb: &NeighborTable) -> f64 {
    tb.mean_nearest_sq(a) + ta.mean_nearest_sq(b)
}

/// Chamfer between a moving point set and a fixed target whose table is
/// reused across many calls (mode scoring and refinement).
pub fn chamfer_to_target(moving: &[Vec3], target: &[Vec3], target_table: &NeighborTable) -> f64 {
    let moving_table = NeighborTable::new(moving);
    chamfer_tables(moving, &moving_table, target, target_table)
}
