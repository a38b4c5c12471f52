//! Tangent-space interpolation of snapshot decompositions within an element.
//!
//! All vertex decompositions are truncated to their common (minimum) rank,
//! lifted to the tangent space at a chosen origin vertex, combined with
//! barycentric weights, and mapped back to the manifold. Left and right
//! factors are treated identically on their respective manifolds.
//!
//! The scale information of each vertex is stored as a small core matrix
//! expressed in the representatives the exponential map actually returns
//! (`B_i = exp(G_i)' F_i exp(H_i)`, diagonal-dominant with the singular
//! values on the diagonal) and averaged entrywise. Storing bare singular
//! values instead would lose the alignment between the exp-map
//! representative and the vertex factors, and indicator weights would then
//! reproduce a vertex field only up to second order in the element size.
//!
//! Charts are immutable after construction and safe to share across threads.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::grassmann::{exp_map, log_map, GrassmannError, SubspacePoint, TangentVector};
use crate::snapshot::{SnapshotDecomposition, SnapshotError};

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("chart needs at least two vertices")]
    TooFewVertices,
    #[error("origin index {0} out of range for {1} vertices")]
    OriginOutOfRange(usize, usize),
    #[error("vertex field shapes differ: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("weight vector has length {0}, expected {1}")]
    WeightCount(usize, usize),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("interpolated singular value {0} is not positive")]
    NonPositiveSingular(f64),
    #[error("vertex {vertex}: {source}")]
    VertexChart {
        vertex: usize,
        source: GrassmannError,
    },
    #[error(transparent)]
    Grassmann(#[from] GrassmannError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// Tangent-space chart of one element: per-vertex tangent lifts of the left
/// and right factors at a common origin, plus the per-vertex core matrices
/// aligned with the exp-map representatives.
#[derive(Debug, Clone)]
pub struct ElementChart {
    origin_index: usize,
    common_rank: usize,
    origin_left: SubspacePoint,
    origin_right: SubspacePoint,
    left_tangents: Vec<TangentVector>,
    right_tangents: Vec<TangentVector>,
    vertex_cores: Vec<DMatrix<f64>>,
}

impl ElementChart {
    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    pub fn common_rank(&self) -> usize {
        self.common_rank
    }

    pub fn vertex_count(&self) -> usize {
        self.left_tangents.len()
    }

    pub fn left_tangents(&self) -> &[TangentVector] {
        &self.left_tangents
    }

    pub fn right_tangents(&self) -> &[TangentVector] {
        &self.right_tangents
    }
}

/// Default origin choice: the vertex with the largest pre-truncation rank,
/// ties broken by lowest index.
pub fn choose_origin(decomps: &[SnapshotDecomposition]) -> usize {
    let mut best = 0usize;
    for (i, d) in decomps.iter().enumerate() {
        if d.rank() > decomps[best].rank() {
            best = i;
        }
    }
    best
}

/// Builds the element chart: truncates every vertex to the minimum rank and
/// lifts each to the tangent space at the origin vertex.
pub fn build_chart(
    decomps: &[SnapshotDecomposition],
    origin_index: usize,
) -> Result<ElementChart, InterpError> {
    if decomps.len() < 2 {
        return Err(InterpError::TooFewVertices);
    }
    if origin_index >= decomps.len() {
        return Err(InterpError::OriginOutOfRange(origin_index, decomps.len()));
    }
    let n = decomps[0].left().ambient_dim();
    let m = decomps[0].right().ambient_dim();
    for d in decomps {
        if d.left().ambient_dim() != n || d.right().ambient_dim() != m {
            return Err(InterpError::ShapeMismatch(
                n,
                m,
                d.left().ambient_dim(),
                d.right().ambient_dim(),
            ));
        }
    }
    let common_rank = decomps.iter().map(|d| d.rank()).min().unwrap();
    let truncated: Vec<SnapshotDecomposition> = decomps
        .iter()
        .map(|d| d.truncate(common_rank))
        .collect::<Result<_, _>>()?;
    let origin_left = truncated[origin_index].left().clone();
    let origin_right = truncated[origin_index].right().clone();
    let mut left_tangents = Vec::with_capacity(truncated.len());
    let mut right_tangents = Vec::with_capacity(truncated.len());
    let mut vertex_cores = Vec::with_capacity(truncated.len());
    for (i, d) in truncated.iter().enumerate() {
        let (gamma_l, gamma_r) = if i == origin_index {
            (
                TangentVector::zero(origin_left.clone()),
                TangentVector::zero(origin_right.clone()),
            )
        } else {
            let lift = |origin: &SubspacePoint, target: &SubspacePoint| {
                log_map(origin, target)
                    .map_err(|source| InterpError::VertexChart { vertex: i, source })
            };
            (lift(&origin_left, d.left())?, lift(&origin_right, d.right())?)
        };
        let u_bar = exp_map(&origin_left, &gamma_l)?;
        let v_bar = exp_map(&origin_right, &gamma_r)?;
        vertex_cores.push(u_bar.basis().transpose() * d.reconstruct() * v_bar.basis());
        left_tangents.push(gamma_l);
        right_tangents.push(gamma_r);
    }
    Ok(ElementChart {
        origin_index,
        common_rank,
        origin_left,
        origin_right,
        left_tangents,
        right_tangents,
        vertex_cores,
    })
}

fn check_weights(chart: &ElementChart, weights: &[f64]) -> Result<(), InterpError> {
    if weights.len() != chart.vertex_count() {
        return Err(InterpError::WeightCount(weights.len(), chart.vertex_count()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(InterpError::WeightSum(sum));
    }
    if let Some(&w) = weights.iter().find(|&&w| w < -1e-8) {
        return Err(InterpError::NegativeWeight(w));
    }
    Ok(())
}

/// Barycentric combination in the tangent space, mapped back to the manifold,
/// with the core matrices averaged entrywise. The averaged core is factored
/// by a small SVD so the result is again a valid decomposition.
pub fn interpolate_decomposition(
    chart: &ElementChart,
    weights: &[f64],
) -> Result<SnapshotDecomposition, InterpError> {
    check_weights(chart, weights)?;
    let combine = |tangents: &[TangentVector], origin: &SubspacePoint| {
        let mut acc = DMatrix::zeros(origin.ambient_dim(), chart.common_rank);
        for (t, &w) in tangents.iter().zip(weights) {
            if w != 0.0 {
                acc += t.matrix() * w;
            }
        }
        TangentVector::new(acc, origin.clone())
    };
    let gamma_left = combine(&chart.left_tangents, &chart.origin_left)?;
    let gamma_right = combine(&chart.right_tangents, &chart.origin_right)?;
    let left = exp_map(&chart.origin_left, &gamma_left)?;
    let right = exp_map(&chart.origin_right, &gamma_right)?;
    let mut core = DMatrix::zeros(chart.common_rank, chart.common_rank);
    for (b, &w) in chart.vertex_cores.iter().zip(weights) {
        if w != 0.0 {
            core += b * w;
        }
    }
    let (u_c, s_c, v_c) = crate::grassmann::thin_svd(&core);
    let singulars: Vec<f64> = s_c.iter().cloned().collect();
    if let Some(&s) = singulars.iter().find(|&&s| s <= 0.0) {
        return Err(InterpError::NonPositiveSingular(s));
    }
    let left = SubspacePoint::new(left.basis() * u_c)?;
    let right = SubspacePoint::new(right.basis() * v_c)?;
    Ok(SnapshotDecomposition::new(left, singulars, right)?)
}

/// Full-field prediction: interpolated decomposition reassembled to a matrix.
pub fn interpolate_field(
    chart: &ElementChart,
    weights: &[f64],
) -> Result<DMatrix<f64>, InterpError> {
    Ok(interpolate_decomposition(chart, weights)?.reconstruct())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{distance_equidim, geodesic, MetricKind};
    use crate::mesh::ParamPoint;
    use crate::snapshot::{decompose, FieldSnapshot, RankPolicy};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_decomp(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize) -> SnapshotDecomposition {
        let f = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5);
        let snap = FieldSnapshot::new(f, ParamPoint::new(vec![0.0, 0.0]).unwrap()).unwrap();
        decompose(&snap, RankPolicy::GlobalRank(r)).unwrap()
    }

    /// A vertex decomposition close to `base` on both factor manifolds.
    fn nearby_decomp(
        rng: &mut ChaCha8Rng,
        base: &SnapshotDecomposition,
        scale: f64,
    ) -> SnapshotDecomposition {
        let perturb = DMatrix::from_fn(
            base.left().ambient_dim(),
            base.right().ambient_dim(),
            |_, _| rng.random::<f64>() - 0.5,
        );
        let f = base.reconstruct() + perturb * scale;
        let snap = FieldSnapshot::new(f, ParamPoint::new(vec![0.0, 0.0]).unwrap()).unwrap();
        decompose(&snap, RankPolicy::GlobalRank(base.rank())).unwrap()
    }

    #[test]
    fn identical_vertices_give_zero_tangents() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_decomp(&mut rng, 20, 12, 3);
        let chart = build_chart(&[d.clone(), d.clone(), d.clone()], 0).unwrap();
        for t in chart.left_tangents() {
            assert!(t.norm() < 1e-8);
        }
        for t in chart.right_tangents() {
            assert!(t.norm() < 1e-8);
        }
    }

    #[test]
    fn two_vertex_chart_matches_log_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_decomp(&mut rng, 20, 12, 3);
        let b = nearby_decomp(&mut rng, &a, 0.05);
        let chart = build_chart(&[a.clone(), b.clone()], 0).unwrap();
        let direct = crate::grassmann::log_map(a.left(), b.left()).unwrap();
        assert!((chart.left_tangents()[1].matrix() - direct.matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn per_vertex_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_decomp(&mut rng, 40, 20, 3);
        let verts: Vec<_> = (0..3)
            .map(|_| nearby_decomp(&mut rng, &base, 0.05))
            .collect();
        let chart = build_chart(&verts, 0).unwrap();
        for (i, t) in chart.left_tangents().iter().enumerate() {
            let back = exp_map(verts[0].left(), t).unwrap();
            let d = crate::grassmann::projection_gap(&back, verts[i].left()).unwrap();
            assert!(d < 1e-8, "vertex {i}: {d}");
        }
    }

    #[test]
    fn indicator_weight_at_origin_returns_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = random_decomp(&mut rng, 20, 12, 3);
        let verts: Vec<_> = (0..3)
            .map(|_| nearby_decomp(&mut rng, &base, 0.05))
            .collect();
        let chart = build_chart(&verts, 0).unwrap();
        let out = interpolate_decomposition(&chart, &[1.0, 0.0, 0.0]).unwrap();
        assert!((out.reconstruct() - verts[0].reconstruct()).abs().max() < 1e-10);
    }

    #[test]
    fn indicator_weight_at_other_vertex_spans_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_decomp(&mut rng, 20, 12, 3);
        let verts: Vec<_> = (0..3)
            .map(|_| nearby_decomp(&mut rng, &base, 0.05))
            .collect();
        let chart = build_chart(&verts, 0).unwrap();
        let out = interpolate_decomposition(&chart, &[0.0, 1.0, 0.0]).unwrap();
        let d = distance_equidim(MetricKind::Grassmann, out.left(), verts[1].left()).unwrap();
        assert!(d < 1e-7);
        let f = interpolate_field(&chart, &[0.0, 1.0, 0.0]).unwrap();
        let truth = verts[1].reconstruct();
        assert!((f - &truth).norm() < 1e-8 * truth.norm());
    }

    #[test]
    fn interpolated_factors_stay_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = random_decomp(&mut rng, 25, 15, 4);
        let verts: Vec<_> = (0..4)
            .map(|_| nearby_decomp(&mut rng, &base, 0.1))
            .collect();
        let chart = build_chart(&verts, choose_origin(&verts)).unwrap();
        let out = interpolate_decomposition(&chart, &[0.25; 4]).unwrap();
        let gram = out.left().basis().transpose() * out.left().basis();
        assert!((gram - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-8);
    }

    #[test]
    fn invariant_under_non_origin_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = random_decomp(&mut rng, 20, 12, 3);
        let verts: Vec<_> = (0..3)
            .map(|_| nearby_decomp(&mut rng, &base, 0.05))
            .collect();
        let chart = build_chart(&verts, 0).unwrap();
        let swapped = vec![verts[0].clone(), verts[2].clone(), verts[1].clone()];
        let chart2 = build_chart(&swapped, 0).unwrap();
        let w1 = [0.5, 0.2, 0.3];
        let w2 = [0.5, 0.3, 0.2];
        let f1 = interpolate_field(&chart, &w1).unwrap();
        let f2 = interpolate_field(&chart2, &w2).unwrap();
        assert!((f1 - f2).abs().max() < 1e-10);
    }

    #[test]
    fn geodesic_consistency_on_a_common_path() {
        // Vertices on a common geodesic from the origin with weights
        // (1-z, z, 0) must interpolate onto that geodesic.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = random_decomp(&mut rng, 20, 12, 3);
        let far = nearby_decomp(&mut rng, &base, 0.3);
        let z = 0.37;
        let chart = build_chart(&[base.clone(), far.clone(), base.clone()], 0).unwrap();
        let out = interpolate_decomposition(&chart, &[1.0 - z, z, 0.0]).unwrap();
        let expect = geodesic(base.left(), far.left(), z).unwrap();
        let d = distance_equidim(MetricKind::Grassmann, out.left(), &expect).unwrap();
        assert!(d < 1e-6, "geodesic deviation {d}");
    }

    #[test]
    fn truncation_to_common_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_decomp(&mut rng, 20, 12, 4);
        let b = nearby_decomp(&mut rng, &a.truncate(2).unwrap(), 0.05);
        let chart = build_chart(&[a, b], 0).unwrap();
        assert_eq!(chart.common_rank(), 2);
    }

    #[test]
    fn weight_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let base = random_decomp(&mut rng, 20, 12, 3);
        let verts: Vec<_> = (0..3)
            .map(|_| nearby_decomp(&mut rng, &base, 0.05))
            .collect();
        let chart = build_chart(&verts, 0).unwrap();
        assert!(matches!(
            interpolate_decomposition(&chart, &[0.5, 0.5]),
            Err(InterpError::WeightCount(2, 3))
        ));
        assert!(matches!(
            interpolate_decomposition(&chart, &[0.5, 0.4, 0.2]),
            Err(InterpError::WeightSum(_))
        ));
        assert!(matches!(
            interpolate_decomposition(&chart, &[1.2, -0.1, -0.1]),
            Err(InterpError::NegativeWeight(_))
        ));
    }

    #[test]
    fn singular_product_names_vertex() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_decomp(&mut rng, 20, 12, 2);
        // Build a vertex whose left factor is orthogonal to a's.
        let mut f = DMatrix::zeros(20, 12);
        for j in 0..12 {
            f[(10 + (j % 5), j)] = 1.0 + j as f64;
        }
        let mut ortho = f.clone();
        // Remove components along a's left basis to force orthogonality.
        let proj = a.left().basis() * (a.left().basis().transpose() * &f);
        ortho -= proj;
        let snap = FieldSnapshot::new(ortho, ParamPoint::new(vec![0.0, 0.0]).unwrap()).unwrap();
        let b = decompose(&snap, RankPolicy::GlobalRank(2)).unwrap();
        match build_chart(&[a, b], 0) {
            Err(InterpError::VertexChart { vertex: 1, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn smooth_family_converges_first_order() {
        // Mesh-shrink study: interpolation error at the element centroid of
        // a smooth synthetic family must vanish at first order or better as
        // the element diameter halves.
        let model = crate::model::ModelSpec::synthetic_smooth(2, 24, 16);
        let centroid = [0.45, 0.55];
        let mut errors = Vec::new();
        for level in 0..4 {
            let h = 0.4 / f64::powi(2.0, level);
            // Equilateral-ish triangle of diameter ~h around the centroid.
            let verts = [
                [centroid[0] - h / 2.0, centroid[1] - h / 3.0],
                [centroid[0] + h / 2.0, centroid[1] - h / 3.0],
                [centroid[0], centroid[1] + 2.0 * h / 3.0],
            ];
            let decomps: Vec<_> = verts
                .iter()
                .map(|v| {
                    let snap = model.evaluate(&ParamPoint::new(v.to_vec()).unwrap()).unwrap();
                    decompose(&snap, RankPolicy::default()).unwrap()
                })
                .collect();
            let chart = build_chart(&decomps, choose_origin(&decomps)).unwrap();
            let pred = interpolate_field(&chart, &[1.0 / 3.0; 3]).unwrap();
            let c: Vec<f64> = (0..2)
                .map(|j| verts.iter().map(|v| v[j]).sum::<f64>() / 3.0)
                .collect();
            let truth = model
                .evaluate(&ParamPoint::new(c).unwrap())
                .unwrap()
                .field()
                .clone();
            errors.push((pred - truth).norm());
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 0.9, "observed order {order} in {errors:?}");
        }
    }
}
