//! Geometric pipeline for keypoint-matching 6D pose estimation in point clouds.
//!
//! Object models are sampled from meshes and carry a set of evenly spread
//! keypoints. Scene points are matched to those keypoints (either by an
//! emulated network head or by classical FPFH features), and a parallel
//! coarse-to-fine RANSAC over Kabsch triplets recovers the object pose.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod correspondence;
pub mod error;
pub mod features;
pub mod geometry;
pub mod index;
pub mod io;
pub mod matchgen;
pub mod metrics;
pub mod normals;
pub mod sampling;
pub mod scenegen;
pub mod seeding;
pub mod shapes;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{apply_transform, diameter, Point3, PointCloud, RigidTransform, TriangleMesh, Vec3};
pub use index::SpatialIndex;
pub use sampling::{build_object_model, ObjectModel};
