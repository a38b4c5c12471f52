//! Field snapshots and their rank-truncated SVD decompositions.
//!
//! A snapshot is the full response matrix of the model at one parameter
//! point. `decompose` factors it as `F = left * diag(s) * right'` and
//! truncates the factors according to a rank policy: either a fixed global
//! rank or a tolerance screen `s_k > max(s) * n_f * eps` (binary64 machine
//! epsilon, optionally scaled).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grassmann::{self, GrassmannError, SubspacePoint};
use crate::mesh::ParamPoint;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("field matrix is zero; nothing to decompose")]
    DegenerateField,
    #[error("field contains a non-finite entry at ({0}, {1})")]
    NonFiniteEntry(usize, usize),
    #[error("requested global rank {requested} but only {available} singular values exceed the tolerance")]
    InsufficientRank { requested: usize, available: usize },
    #[error("field must have at least one row and column")]
    EmptyField,
    #[error("flat field of length {0} cannot be reshaped to {1} x {2}")]
    ShapeMismatch(usize, usize, usize),
    #[error(transparent)]
    Grassmann(#[from] GrassmannError),
}

/// Rank selection strategy for snapshot decompositions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Keep exactly this many leading singular triplets.
    GlobalRank(usize),
    /// Keep singular values above `max(s) * n_f * eps * scale`.
    Tolerance { scale: f64 },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Tolerance { scale: 1.0 }
    }
}

/// The full response matrix at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    field: DMatrix<f64>,
    params: ParamPoint,
}

impl FieldSnapshot {
    pub fn new(field: DMatrix<f64>, params: ParamPoint) -> Result<Self, SnapshotError> {
        if field.nrows() == 0 || field.ncols() == 0 {
            return Err(SnapshotError::EmptyField);
        }
        for i in 0..field.nrows() {
            for j in 0..field.ncols() {
                if !field[(i, j)].is_finite() {
                    return Err(SnapshotError::NonFiniteEntry(i, j));
                }
            }
        }
        Ok(Self { field, params })
    }

    /// Row-major reshape of a flat response vector into an `n_f` x `m_f`
    /// matrix. The shape is a caller choice; it changes the manifold the
    /// decomposition lives on.
    pub fn from_flat(
        flat: &[f64],
        n_f: usize,
        m_f: usize,
        params: ParamPoint,
    ) -> Result<Self, SnapshotError> {
        if flat.len() != n_f * m_f {
            return Err(SnapshotError::ShapeMismatch(flat.len(), n_f, m_f));
        }
        let field = DMatrix::from_row_slice(n_f, m_f, flat);
        Self::new(field, params)
    }

    pub fn field(&self) -> &DMatrix<f64> {
        &self.field
    }

    pub fn params(&self) -> &ParamPoint {
        &self.params
    }

    pub fn shape(&self) -> (usize, usize) {
        self.field.shape()
    }
}

/// Rank-truncated thin SVD of a snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotDecomposition {
    left: SubspacePoint,
    singular_values: Vec<f64>,
    right: SubspacePoint,
}

impl SnapshotDecomposition {
    pub fn new(
        left: SubspacePoint,
        singular_values: Vec<f64>,
        right: SubspacePoint,
    ) -> Result<Self, SnapshotError> {
        let r = singular_values.len();
        if left.rank() != r || right.rank() != r {
            return Err(SnapshotError::ShapeMismatch(r, left.rank(), right.rank()));
        }
        for w in singular_values.windows(2) {
            if w[1] > w[0] {
                return Err(SnapshotError::DegenerateField);
            }
        }
        if singular_values.iter().any(|&s| s <= 0.0) {
            return Err(SnapshotError::DegenerateField);
        }
        Ok(Self {
            left,
            singular_values,
            right,
        })
    }

    pub fn left(&self) -> &SubspacePoint {
        &self.left
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn right(&self) -> &SubspacePoint {
        &self.right
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Reassembles `left * diag(s) * right'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            self.singular_values.clone(),
        ));
        self.left.basis() * sigma * self.right.basis().transpose()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> Result<Self, SnapshotError> {
        Ok(Self {
            left: self.left.truncate(k)?,
            singular_values: self.singular_values[..k].to_vec(),
            right: self.right.truncate(k)?,
        })
    }
}

/// Thin SVD of the snapshot field, truncated per the rank policy.
pub fn decompose(
    snapshot: &FieldSnapshot,
    policy: RankPolicy,
) -> Result<SnapshotDecomposition, SnapshotError> {
    let (n_f, _) = snapshot.shape();
    let (_, s, v) = grassmann::thin_svd(snapshot.field());
    let max_sv = s.iter().cloned().fold(0.0f64, f64::max);
    if max_sv == 0.0 {
        return Err(SnapshotError::DegenerateField);
    }
    let screen = max_sv * n_f as f64 * f64::EPSILON;
    let above = |tol: f64| s.iter().filter(|&&x| x > tol).count();
    let rank = match policy {
        RankPolicy::GlobalRank(r) => {
            let available = above(screen);
            if available < r {
                return Err(SnapshotError::InsufficientRank {
                    requested: r,
                    available,
                });
            }
            r
        }
        // Always keep at least the leading triplet; downstream geometry
        // needs rank >= 1.
        RankPolicy::Tolerance { scale } => above(screen * scale).max(1),
    };
    // One step of two-sided subspace iteration plus a small SVD. The initial
    // factorization can lose several digits when the field is (numerically)
    // rank deficient; this refinement restores residuals near machine
    // precision while keeping the deterministic sign convention.
    let v_r = v.columns(0, rank).into_owned();
    let q_u = grassmann::orthonormalize(&(snapshot.field() * &v_r));
    let q_v = grassmann::orthonormalize(&(snapshot.field().transpose() * &q_u));
    let w = q_u.transpose() * snapshot.field() * &q_v;
    let (u_w, s_w, v_w) = grassmann::thin_svd(&w);
    let left = SubspacePoint::new(q_u * u_w)?;
    let right = SubspacePoint::new(q_v * v_w)?;
    let singular_values = s_w.iter().take(rank).cloned().collect();
    SnapshotDecomposition::new(left, singular_values, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{distance_equidim, MetricKind};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn origin(dim: usize) -> ParamPoint {
        ParamPoint::new(vec![0.0; dim]).unwrap()
    }

    #[test]
    fn diagonal_field_full_rank() {
        let f = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let snap = FieldSnapshot::new(f, origin(2)).unwrap();
        let dec = decompose(&snap, RankPolicy::default()).unwrap();
        assert_eq!(dec.rank(), 3);
        assert_relative_eq!(dec.singular_values()[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(dec.singular_values()[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(dec.singular_values()[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = nalgebra::DVector::from_fn(6, |i, _| (i as f64 + 1.0).sin());
        let v = nalgebra::DVector::from_fn(4, |i, _| (i as f64 - 2.0).cos());
        let f = &u * v.transpose();
        let snap = FieldSnapshot::new(f.clone(), origin(2)).unwrap();
        let dec = decompose(&snap, RankPolicy::default()).unwrap();
        assert_eq!(dec.rank(), 1);
        assert!((dec.reconstruct() - f).abs().max() < 1e-12);
    }

    #[test]
    fn truncation_error_matches_tail_energy() {
        // Eckart-Young: the best rank-10 approximation error equals the
        // root-sum-square of the discarded singular values from a full SVD.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = DMatrix::from_fn(50, 40, |_, _| rng.random::<f64>() - 0.5);
        let snap = FieldSnapshot::new(f.clone(), origin(2)).unwrap();
        let dec = decompose(&snap, RankPolicy::GlobalRank(10)).unwrap();
        let err = (dec.reconstruct() - &f).norm();
        let full = f.svd(false, false);
        let tail: f64 = full
            .singular_values
            .iter()
            .skip(10)
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(err, tail, epsilon = 1e-9);
    }

    #[test]
    fn full_rank_reconstruction_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = DMatrix::from_fn(12, 9, |_, _| rng.random::<f64>());
        let snap = FieldSnapshot::new(f.clone(), origin(2)).unwrap();
        let dec = decompose(&snap, RankPolicy::default()).unwrap();
        assert!((dec.reconstruct() - &f).norm() < 1e-9 * f.norm());
    }

    #[test]
    fn zero_field_rejected() {
        let snap = FieldSnapshot::new(DMatrix::zeros(4, 4), origin(2)).unwrap();
        assert!(matches!(
            decompose(&snap, RankPolicy::default()),
            Err(SnapshotError::DegenerateField)
        ));
    }

    #[test]
    fn insufficient_rank_reported() {
        let u = nalgebra::DVector::from_element(5, 1.0);
        let v = nalgebra::DVector::from_element(5, 1.0);
        let f = &u * v.transpose();
        let snap = FieldSnapshot::new(f, origin(2)).unwrap();
        match decompose(&snap, RankPolicy::GlobalRank(3)) {
            Err(SnapshotError::InsufficientRank {
                requested: 3,
                available: 1,
            }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn scaling_preserves_subspaces_and_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DMatrix::from_fn(15, 10, |_, _| rng.random::<f64>() - 0.5);
        let snap = FieldSnapshot::new(f.clone(), origin(2)).unwrap();
        let scaled = FieldSnapshot::new(f * 7.5, origin(2)).unwrap();
        let d1 = decompose(&snap, RankPolicy::default()).unwrap();
        let d2 = decompose(&scaled, RankPolicy::default()).unwrap();
        assert_eq!(d1.rank(), d2.rank());
        assert!(
            distance_equidim(MetricKind::Grassmann, d1.left(), d2.left()).unwrap() < 1e-7
        );
        for (a, b) in d1.singular_values().iter().zip(d2.singular_values()) {
            assert_relative_eq!(b / a, 7.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn decompose_reconstruct_idempotent_in_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = DMatrix::from_fn(20, 12, |_, _| rng.random::<f64>() - 0.5);
        let snap = FieldSnapshot::new(f, origin(2)).unwrap();
        let d1 = decompose(&snap, RankPolicy::GlobalRank(5)).unwrap();
        let snap2 = FieldSnapshot::new(d1.reconstruct(), origin(2)).unwrap();
        let d2 = decompose(&snap2, RankPolicy::GlobalRank(5)).unwrap();
        assert!(
            distance_equidim(MetricKind::Grassmann, d1.left(), d2.left()).unwrap() < 1e-7
        );
    }

    #[test]
    fn reshape_helper_round_trips() {
        let flat: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let snap = FieldSnapshot::from_flat(&flat, 3, 4, origin(2)).unwrap();
        assert_eq!(snap.field()[(1, 0)], 4.0);
        assert!(FieldSnapshot::from_flat(&flat, 5, 4, origin(2)).is_err());
    }
}
