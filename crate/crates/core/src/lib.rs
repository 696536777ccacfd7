//! Occupancy-function surface reconstruction from sparse, noisy point clouds.
//!
//! The pipeline mirrors a classic learning-based reconstruction setup:
//!
//! 1. [`shapegen`] builds a synthetic corpus of watertight CSG-style solids
//!    together with noisy point-cloud scans and labelled occupancy queries.
//! 2. [`pcnn`] provides continuous point convolutions — extension of point
//!    features to a volumetric function by Gaussian splatting, closed-form
//!    convolution with a learned 3×3×3 Gaussian-mixture kernel, and
//!    restriction back to point samples — plus pooling/upsampling and a
//!    reverse-mode tape for training.
//! 3. [`occnet`] wires those pieces into a U-shaped encoder/decoder that
//!    maps an unoriented point cloud and a batch of query points to
//!    per-query occupancy probabilities.
//! 4. [`train`] fits the network with Adam on the corpus; [`extract`]
//!    polygonizes the learned indicator with hierarchical marching cubes;
//!    [`metrics`] scores reconstructions (volumetric IoU, Chamfer-L1,
//!    normal consistency) against ground-truth meshes.
//!
//! Everything is generic over the scalar type ([`Real`]: f32 or f64);
//! the type aliases at the crate root pin the default f64 instantiation.

pub mod error;
pub mod extract;
pub mod geometry;
pub mod metrics;
pub mod occnet;
pub mod pcnn;
pub mod scalar;
pub mod seed;
pub mod shapegen;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default scalar for end-to-end runs.
pub type Scalar = f64;

/// 3-D point at the default scalar.
pub type Point3 = nalgebra::Point3<Scalar>;
/// 3-D vector at the default scalar.
pub type Vector3 = nalgebra::Vector3<Scalar>;

/// Triangle mesh at the default scalar.
pub type Mesh = geometry::TriMesh<Scalar>;
/// Point cloud at the default scalar.
pub type PointCloud = geometry::PointSet<Scalar>;
/// Axis-aligned bounding box at the default scalar.
pub type Aabb = geometry::Aabb3<Scalar>;
