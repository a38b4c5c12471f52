//! Default numerical tolerances.
//!
//! All thresholds used across the geometry kernel live here so that every
//! module compares against the same constants. Each is overridable where a
//! function exposes a tolerance parameter.

/// Maximum deviation of `basis' * basis` from the identity for a matrix to be
/// accepted as an orthonormal subspace representative.
pub const ORTHONORMALITY: f64 = 1e-10;

/// Maximum deviation of `origin' * gamma` from zero for a matrix to be
/// accepted as a tangent vector at `origin`.
pub const TANGENCY: f64 = 1e-8;

/// Smallest singular value of the chart overlap matrix below which the local
/// inversion is refused.
pub const SINGULAR_PRODUCT: f64 = 1e-12;

/// Expected accuracy of exp/log roundtrips and geodesic endpoints, measured
/// as a projector gap (angle-based distances have an arccos conditioning
/// floor near coincident subspaces and cannot resolve this level).
pub const ROUNDTRIP: f64 = 1e-8;

/// Minimum separation between distinct mesh points.
pub const POINT_SEPARATION: f64 = 1e-9;

/// Simplices with volume below this are treated as degenerate.
pub const DEGENERATE_VOLUME: f64 = 1e-14;

/// Element scores below this are treated as zero variation.
pub const ZERO_SCORE: f64 = 1e-12;
