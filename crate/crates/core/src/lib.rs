//! Laplace-Beltrami operators computed directly on 3D Gaussian splatting
//! scenes.
//!
//! The pipeline builds a mutual k-nearest-neighbor graph over splat centers
//! (ranked by Mahalanobis distance to each splat's distribution), filters
//! outlier splats by connectivity, triangulates each neighborhood in its
//! tangent plane and assembles a cotan stiffness matrix with a lumped mass
//! matrix. On top of the operator the crate provides a shift-invert Lanczos
//! eigensolver, heat-method geodesics, mean curvature, functional maps and
//! spectral smoothing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod delaunay;
pub mod error;
pub mod heat;
pub mod kdtree;
pub mod laplacian;
pub mod mtx;
pub mod neighborhood;
pub mod sparse;
pub mod spectral;
pub mod splat_io;
pub mod synthetic;

pub use error::{Error, Result};

pub use apps::{Correspondence, FunctionalMap};
pub use heat::ScalarField;
pub use laplacian::{LaplacianPair, NormalSource, TriangleSoup};
pub use neighborhood::{Metric, NeighborGraph};
pub use spectral::Spectrum;
pub use splat_io::{GaussianSplat, SplatSet, TriangleMesh};

/// 3D vector in scene units.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 real matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
