//! Category-agnostic point-cloud pose estimation from rotation-invariant
//! patch features.
//!
//! The pipeline: sample and normalize a model cloud, annotate its patch
//! (the neighbourhoods of the endpoints of its longest pairwise vectors),
//! then recover the rotation of an observed copy by scoring the 60 modes
//! of the icosahedral rotation group with the chamfer distance and
//! refining a residual rotation bounded below 36°.
//!
//! Modules:
//! - [`geometry`]: points, quaternions, sampling, chamfer distance
//! - [`icosa`]: the 60 rotation modes and residual decomposition
//! - [`patch`]: patch annotation and its stability check
//! - [`patchnet`]: a small per-point patch classifier
//! - [`pose`]: mode scoring, residual refinement, the training loss
//! - [`pose_head`]: a small learned mode/residual head
//! - [`symmetry`]: symmetry-aware errors and metrics
//! - [`io`]: OBJ/PLY/JSON/CSV formats and dataset synthesis

// `!(x > 0.0)` also rejects NaN; index loops mirror the backprop formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod icosa;
pub mod io;
pub mod patch;
pub mod patchnet;
pub mod pose;
pub mod pose_head;
pub mod rng;
pub mod shapes;
pub mod symmetry;

pub use error::{Error, Result};
pub use geometry::{PointCloud, Pose, TriangleMesh, UnitQuaternion, Vec3};
pub use icosa::{IcosaGroup, RotationDecomposition};
pub use patch::{PatchAnnotation, PatchParams};
pub use symmetry::{EvalReport, SymmetrySpec};
