//! Point clouds, rotations and the chamfer distance.

mod chamfer;
mod cloud;
mod mesh;
mod quat;
mod vec3;

pub use chamfer::{chamfer_distance, chamfer_points, chamfer_tables, chamfer_to_target, NeighborTable};
pub use cloud::{
    apply_rotation, centroid, farthest_from_centroid, farthest_point_sample, normalize, perturb,
    random_rotation, random_rotation_with, shuffle, NormalizationRecord, PerturbationConfig,
    PointCloud, Pose,
};
pub use mesh::{sample_surface_points, TriangleMesh};
pub use quat::{hamilton, quat_compose, quat_geodesic_degrees, UnitQuaternion, UNIT_TOLERANCE};
pub use vec3::Vec3;
