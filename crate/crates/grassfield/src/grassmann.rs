//! Subspace geometry kernel.
//!
//! Points on the Grassmann manifold G(r, n) are represented by orthonormal
//! n-by-r bases ([`SubspacePoint`]); two bases spanning the same column space
//! are the same point. The kernel computes principal angles between
//! subspaces, the three distance metrics in both the equal-rank and the
//! rank-mismatched (doubly infinite) conventions, logarithmic and exponential
//! maps between the manifold and a tangent space, and geodesic paths.
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tol;

/// Errors from subspace geometry operations.
#[derive(Debug, Error)]
pub enum GrassmannError {
    #[error("ambient dimensions differ: {0} vs {1}")]
    AmbientMismatch(usize, usize),
    #[error("subspace ranks differ: {0} vs {1} (use distance_infinite)")]
    RankMismatch(usize, usize),
    #[error("basis is not orthonormal (max deviation {0:.3e})")]
    NonOrthonormal(f64),
    #[error("invalid basis shape: {0} x {1}")]
    InvalidShape(usize, usize),
    #[error("overlap matrix is numerically singular (smallest singular value {0:.3e})")]
    SingularProduct(f64),
    #[error("tangent vector violates tangency (max deviation {0:.3e})")]
    TangencyViolation(f64),
    #[error("tangent vector origin does not match the map origin")]
    OriginMismatch,
    #[error("geodesic parameter {0} outside [0, 1]")]
    DomainError(f64),
}

/// Distance metric family on the Grassmann manifold.
///
/// The Procrustes variant follows the rank-mismatched convention
/// `(sum sin^2(theta/2))^(1/2)` without a leading factor 2, so that the
/// equal-rank and mismatched-rank code paths agree when ranks coincide.
/// The classical doubled form is available through
/// [`distance_equidim_classic_procrustes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Grassmann,
    Chordal,
    Procrustes,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [
        MetricKind::Grassmann,
        MetricKind::Chordal,
        MetricKind::Procrustes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Grassmann => "grassmann",
            MetricKind::Chordal => "chordal",
            MetricKind::Procrustes => "procrustes",
        }
    }
}

/// An orthonormal n-by-r basis representing a point on G(r, n).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePoint {
    basis: DMatrix<f64>,
}

impl SubspacePoint {
    /// Wraps an orthonormal basis, verifying the Stiefel membership
    /// `basis' * basis = I` within [`tol::ORTHONORMALITY`].
    pub fn new(basis: DMatrix<f64>) -> Result<Self, GrassmannError> {
        let (n, r) = basis.shape();
        if r == 0 || r > n {
            return Err(GrassmannError::InvalidShape(n, r));
        }
        let dev = orthonormality_deviation(&basis);
        if dev > tol::ORTHONORMALITY {
            return Err(GrassmannError::NonOrthonormal(dev));
        }
        Ok(Self { basis })
    }

    /// Builds the subspace spanned by the columns of an arbitrary full-rank
    /// matrix, orthonormalizing by QR with positive diagonal sign convention.
    pub fn from_span(matrix: DMatrix<f64>) -> Result<Self, GrassmannError> {
        let (n, r) = matrix.shape();
        if r == 0 || r > n {
            return Err(GrassmannError::InvalidShape(n, r));
        }
        let basis = orthonormalize(&matrix);
        Self::new(basis)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Keeps the leading `k` basis columns.
    pub fn truncate(&self, k: usize) -> Result<Self, GrassmannError> {
        if k == 0 || k > self.rank() {
            return Err(GrassmannError::InvalidShape(self.ambient_dim(), k));
        }
        Ok(Self {
            basis: self.basis.columns(0, k).into_owned(),
        })
    }
}

/// An element of the tangent space at `origin`: an n-by-r matrix orthogonal
/// to the origin basis column space.
#[derive(Debug, Clone)]
pub struct TangentVector {
    matrix: DMatrix<f64>,
    origin: SubspacePoint,
}

impl TangentVector {
    /// Wraps a tangent matrix, verifying `origin' * matrix = 0` within
    /// [`tol::TANGENCY`].
    pub fn new(matrix: DMatrix<f64>, origin: SubspacePoint) -> Result<Self, GrassmannError> {
        let dev = (origin.basis().transpose() * &matrix).abs().max();
        if dev > tol::TANGENCY {
            return Err(GrassmannError::TangencyViolation(dev));
        }
        Ok(Self { matrix, origin })
    }

    /// The zero tangent vector at `origin`.
    pub fn zero(origin: SubspacePoint) -> Self {
        let matrix = DMatrix::zeros(origin.ambient_dim(), origin.rank());
        Self { matrix, origin }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn origin(&self) -> &SubspacePoint {
        &self.origin
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// Principal angles between two subspaces, sorted nondecreasing in [0, pi/2].
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngleSet {
    angles: Vec<f64>,
}

impl PrincipalAngleSet {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

fn orthonormality_deviation(basis: &DMatrix<f64>) -> f64 {
    let r = basis.ncols();
    let gram = basis.transpose() * basis;
    (gram - DMatrix::<f64>::identity(r, r)).abs().max()
}

/// QR orthonormalization with the R diagonal forced nonnegative, so that an
/// already-orthonormal input is returned unchanged.
pub(crate) fn orthonormalize(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = matrix.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Thin SVD with a deterministic sign convention: the largest-magnitude entry
/// of each left singular vector is nonnegative. Returns (U, s, V).
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let mut u = svd.u.expect("svd requested u");
    let mut v = svd.v_t.expect("svd requested v_t").transpose();
    let s = svd.singular_values;
    for j in 0..u.ncols() {
        let mut pivot = 0usize;
        let mut best = 0.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        if u[(pivot, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    (u, s, v)
}

fn check_ambient(a: &SubspacePoint, b: &SubspacePoint) -> Result<(), GrassmannError> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(GrassmannError::AmbientMismatch(
            a.ambient_dim(),
            b.ambient_dim(),
        ));
    }
    Ok(())
}

/// Principal angles theta_k = arccos(sigma_k) from the singular values of
/// `a' * b`, clamped to [0, 1] before the arccosine.
pub fn principal_angles(
    a: &SubspacePoint,
    b: &SubspacePoint,
) -> Result<PrincipalAngleSet, GrassmannError> {
    check_ambient(a, b)?;
    let product = a.basis().transpose() * b.basis();
    let svd = product.svd(false, false);
    // Singular values come sorted nonincreasing, so the angles are already
    // nondecreasing.
    let angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s.clamp(0.0, 1.0).acos())
        .collect();
    Ok(PrincipalAngleSet { angles })
}

fn metric_from_angles(kind: MetricKind, angles: &[f64]) -> f64 {
    let sum: f64 = angles
        .iter()
        .map(|&t| match kind {
            MetricKind::Grassmann => t * t,
            MetricKind::Chordal => t.sin().powi(2),
            MetricKind::Procrustes => (t / 2.0).sin().powi(2),
        })
        .sum();
    sum.sqrt()
}

/// Distance between equal-rank subspaces.
///
/// Grassmann: `(sum theta^2)^(1/2)`; Chordal: `(sum sin^2 theta)^(1/2)`;
/// Procrustes: `(sum sin^2(theta/2))^(1/2)` (see [`MetricKind`] for the
/// convention).
pub fn distance_equidim(
    kind: MetricKind,
    a: &SubspacePoint,
    b: &SubspacePoint,
) -> Result<f64, GrassmannError> {
    if a.rank() != b.rank() {
        return Err(GrassmannError::RankMismatch(a.rank(), b.rank()));
    }
    let angles = principal_angles(a, b)?;
    Ok(metric_from_angles(kind, angles.angles()))
}

/// Frobenius norm of the difference of the orthogonal projectors,
/// `|| A A' - B B' ||_F` (equal to `sqrt(2)` times the chordal distance).
/// Unlike the angle-based metrics this has no arccos conditioning floor near
/// coincident subspaces, so it is the right measure for roundtrip residuals.
pub fn projection_gap(a: &SubspacePoint, b: &SubspacePoint) -> Result<f64, GrassmannError> {
    check_ambient(a, b)?;
    let pa = a.basis() * a.basis().transpose();
    let pb = b.basis() * b.basis().transpose();
    Ok((pa - pb).norm())
}

/// The classical Procrustes distance `2 (sum sin^2(theta/2))^(1/2)`.
pub fn distance_equidim_classic_procrustes(
    a: &SubspacePoint,
    b: &SubspacePoint,
) -> Result<f64, GrassmannError> {
    Ok(2.0 * distance_equidim(MetricKind::Procrustes, a, b)?)
}

/// Distance between subspaces of possibly different rank, on the disjoint
/// union of Grassmannians over all ranks. The `|r_a - r_b|` missing angles
/// are filled with pi/2, which adds `delta * pi^2 / 4` (Grassmann),
/// `delta` (Chordal), or `delta / 2` (Procrustes, since sin^2(pi/4) = 1/2)
/// under the square root.
pub fn distance_infinite(
    kind: MetricKind,
    a: &SubspacePoint,
    b: &SubspacePoint,
) -> Result<f64, GrassmannError> {
    let angles = principal_angles(a, b)?;
    let delta = a.rank().abs_diff(b.rank()) as f64;
    let pad = match kind {
        MetricKind::Grassmann => {
            delta * std::f64::consts::FRAC_PI_2 * std::f64::consts::FRAC_PI_2
        }
        MetricKind::Chordal => delta,
        MetricKind::Procrustes => delta / 2.0,
    };
    let sum: f64 = angles
        .angles()
        .iter()
        .map(|&t| match kind {
            MetricKind::Grassmann => t * t,
            MetricKind::Chordal => t.sin().powi(2),
            MetricKind::Procrustes => (t / 2.0).sin().powi(2),
        })
        .sum();
    Ok((pad + sum).sqrt())
}

/// Factorization underlying the log map: thin SVD of
/// `M = (target - origin origin' target) (origin' target)^{-1}`.
fn log_factors(
    origin: &SubspacePoint,
    target: &SubspacePoint,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>), GrassmannError> {
    check_ambient(origin, target)?;
    if origin.rank() != target.rank() {
        return Err(GrassmannError::RankMismatch(origin.rank(), target.rank()));
    }
    let overlap = origin.basis().transpose() * target.basis();
    let overlap_svd = overlap.clone().svd(false, false);
    let smin = overlap_svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin < tol::SINGULAR_PRODUCT {
        return Err(GrassmannError::SingularProduct(smin));
    }
    let inv = overlap
        .try_inverse()
        .ok_or(GrassmannError::SingularProduct(smin))?;
    let m = (target.basis() - origin.basis() * (origin.basis().transpose() * target.basis())) * inv;
    Ok(thin_svd(&m))
}

/// Lifts `target` to the tangent space at `origin`:
/// `Gamma = U arctan(S) V'` from the thin SVD of the chart matrix M.
pub fn log_map(
    origin: &SubspacePoint,
    target: &SubspacePoint,
) -> Result<TangentVector, GrassmannError> {
    let (u, s, v) = log_factors(origin, target)?;
    let atan = DMatrix::from_diagonal(&s.map(|x| x.atan()));
    let gamma = &u * atan * v.transpose();
    // Numerical tangency error grows with the angles; project back onto the
    // tangent space before wrapping.
    let projected = &gamma - origin.basis() * (origin.basis().transpose() * &gamma);
    TangentVector::new(projected, origin.clone())
}

/// Projects a tangent vector back onto the manifold:
/// `span[(origin V cos(S) + U sin(S)) V']` from the thin SVD of Gamma.
pub fn exp_map(
    origin: &SubspacePoint,
    gamma: &TangentVector,
) -> Result<SubspacePoint, GrassmannError> {
    if gamma.origin().basis().shape() != origin.basis().shape()
        || (gamma.origin().basis() - origin.basis()).abs().max() > tol::TANGENCY
    {
        return Err(GrassmannError::OriginMismatch);
    }
    let dev = (origin.basis().transpose() * gamma.matrix()).abs().max();
    if dev > tol::TANGENCY {
        return Err(GrassmannError::TangencyViolation(dev));
    }
    if gamma.norm() < 1e-30 {
        return Ok(origin.clone());
    }
    let (u, s, v) = thin_svd(gamma.matrix());
    let cos = DMatrix::from_diagonal(&s.map(|x| x.cos()));
    let sin = DMatrix::from_diagonal(&s.map(|x| x.sin()));
    let m = (origin.basis() * &v * cos + u * sin) * v.transpose();
    SubspacePoint::from_span(m)
}

/// Point at parameter `z` on the geodesic from `a` (z = 0) to `b` (z = 1).
pub fn geodesic(
    a: &SubspacePoint,
    b: &SubspacePoint,
    z: f64,
) -> Result<SubspacePoint, GrassmannError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(GrassmannError::DomainError(z));
    }
    let (u, s, v) = log_factors(a, b)?;
    let theta = s.map(|x| x.atan());
    let cos = DMatrix::from_diagonal(&theta.map(|x| (z * x).cos()));
    let sin = DMatrix::from_diagonal(&theta.map(|x| (z * x).sin()));
    let m = (a.basis() * &v * cos + u * sin) * v.transpose();
    SubspacePoint::from_span(m)
}
