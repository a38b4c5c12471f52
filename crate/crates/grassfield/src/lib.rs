//! Adaptive sampling engine for full-field surrogate models.
//!
//! The engine samples a low-dimensional parameter hypercube, compresses each
//! high-dimensional model response with a thin SVD, and treats the resulting
//! orthonormal factors as points on a Grassmann manifold. A Delaunay
//! discretization of the parameter space is refined where the subspace
//! distances between element vertices are large, and full fields at unsampled
//! points are reconstructed by barycentric interpolation in the tangent space
//! of an element chart.
//!
//! Module map:
//! - [`grassmann`]: principal angles, subspace metrics, log/exp maps, geodesics
//! - [`snapshot`]: field matrices, thin-SVD decompositions, rank policies
//! - [`io`]: snapshot file formats used for batch-solver coupling
//! - [`mesh`]: Delaunay triangulation of the unit hypercube and refinement
//!   point sampling
//! - [`interp`]: tangent-space interpolation of decompositions within an
//!   element
//! - [`model`]: synthetic field families and file-exchange solver coupling
//! - [`refine`]: element scoring, percentile selection, convergence
//!   bookkeeping, and the adaptive campaign driver

pub mod grassmann;
pub mod interp;
pub mod io;
pub mod mesh;
pub mod model;
pub mod refine;
pub mod snapshot;
pub mod tol;

pub use grassmann::{MetricKind, PrincipalAngleSet, SubspacePoint, TangentVector};
pub use mesh::{ParamPoint, Simplex, SimplexMesh};
pub use snapshot::{FieldSnapshot, RankPolicy, SnapshotDecomposition};
