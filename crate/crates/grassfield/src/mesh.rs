//! Delaunay discretization of the unit hypercube.
//!
//! The mesh starts from the 2^d corner points plus the centroid and grows by
//! incremental Bowyer-Watson insertion. Points never leave [0,1]^d, so every
//! inserted point lies inside the current triangulation and no super-simplex
//! is needed. Cospherical ties are counted as inside the circumsphere, which
//! keeps the cavity star-shaped for the fully degenerate corner
//! configuration.
//!
//! The mesh is single-writer; volume, weight, and containment queries are
//! pure reads.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::tol;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parameter dimension {0} unsupported (must be 1..=6)")]
    DimensionUnsupported(usize),
    #[error("coordinate {0} outside [0, 1]")]
    CoordinateOutOfRange(f64),
    #[error("point coincides with existing point {0}")]
    DuplicatePoint(usize),
    #[error("point dimension {0} does not match mesh dimension {1}")]
    DimensionMismatch(usize, usize),
    #[error("query point lies outside simplex (weight {0:.3e})")]
    OutsideSimplex(f64),
    #[error("query point outside the triangulation")]
    OutsideMesh,
    #[error("insertion produced an empty cavity; mesh is corrupt")]
    EmptyCavity,
    #[error("simplex {0} not found in mesh")]
    UnknownSimplex(usize),
}

/// A point in the unit hypercube parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    coords: Vec<f64>,
}

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, MeshError> {
        for &c in &coords {
            if !(0.0..=1.0).contains(&c) {
                return Err(MeshError::CoordinateOutOfRange(c));
            }
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn dist(&self, other: &ParamPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A d-simplex referencing d+1 points of the mesh table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Simplex {
    vertex_ids: Vec<usize>,
}

impl Simplex {
    fn new(mut vertex_ids: Vec<usize>) -> Self {
        vertex_ids.sort_unstable();
        Self { vertex_ids }
    }

    pub fn vertex_ids(&self) -> &[usize] {
        &self.vertex_ids
    }
}

/// A Delaunay triangulation of [0,1]^d with an ordered point table.
#[derive(Debug, Clone)]
pub struct SimplexMesh {
    dim: usize,
    points: Vec<ParamPoint>,
    simplices: Vec<Simplex>,
}

impl SimplexMesh {
    /// The initial design: hypercube corners triangulated by vertex-ordering
    /// chains, then the centroid inserted. Yields 5 points / 4 triangles for
    /// d = 2 and 9 points / 12 tetrahedra for d = 3.
    pub fn initial_design(dim: usize) -> Result<Self, MeshError> {
        if !(1..=6).contains(&dim) {
            return Err(MeshError::DimensionUnsupported(dim));
        }
        let mut points = Vec::with_capacity((1usize << dim) + 1);
        for mask in 0..(1usize << dim) {
            let coords = (0..dim)
                .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
                .collect();
            points.push(ParamPoint::new(coords)?);
        }
        // Kuhn triangulation: one simplex per coordinate ordering, walking
        // from the zero corner to the ones corner.
        let mut simplices = Vec::new();
        let mut perm: Vec<usize> = (0..dim).collect();
        permute_all(&mut perm, 0, &mut |p| {
            let mut mask = 0usize;
            let mut ids = vec![0usize];
            for &j in p {
                mask |= 1 << j;
                ids.push(mask);
            }
            simplices.push(Simplex::new(ids));
        });
        let mut mesh = Self {
            dim,
            points,
            simplices,
        };
        mesh.sort_simplices();
        mesh.insert_point(ParamPoint::new(vec![0.5; dim])?)?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[ParamPoint] {
        &self.points
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    fn sort_simplices(&mut self) {
        self.simplices.sort();
    }

    fn vertex_coords(&self, s: &Simplex) -> Vec<&[f64]> {
        s.vertex_ids
            .iter()
            .map(|&i| self.points[i].coords())
            .collect()
    }

    /// Inserts a point by Bowyer-Watson, preserving existing point indices.
    /// Returns the index of the new point.
    pub fn insert_point(&mut self, p: ParamPoint) -> Result<usize, MeshError> {
        if p.dim() != self.dim {
            return Err(MeshError::DimensionMismatch(p.dim(), self.dim));
        }
        for (i, q) in self.points.iter().enumerate() {
            if p.dist(q) <= tol::POINT_SEPARATION {
                return Err(MeshError::DuplicatePoint(i));
            }
        }
        let mut bad = Vec::new();
        let mut kept = Vec::new();
        for s in &self.simplices {
            if self.in_circumsphere(s, p.coords()) {
                bad.push(s.clone());
            } else {
                kept.push(s.clone());
            }
        }
        if bad.is_empty() {
            return Err(MeshError::EmptyCavity);
        }
        // Facets appearing once among the bad simplices bound the cavity.
        let mut facet_counts: std::collections::BTreeMap<Vec<usize>, usize> =
            std::collections::BTreeMap::new();
        for s in &bad {
            for skip in 0..s.vertex_ids.len() {
                let facet: Vec<usize> = s
                    .vertex_ids
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                *facet_counts.entry(facet).or_insert(0) += 1;
            }
        }
        let new_id = self.points.len();
        self.points.push(p);
        for (facet, count) in facet_counts {
            if count != 1 {
                continue;
            }
            let mut ids = facet;
            ids.push(new_id);
            let s = Simplex::new(ids);
            // The new point can lie exactly on a cavity boundary facet (for
            // example on a domain facet); the coned simplex is then flat and
            // the neighbors cover its region.
            if self.volume_of_ids(&s.vertex_ids) > tol::DEGENERATE_VOLUME {
                kept.push(s);
            }
        }
        self.simplices = kept;
        self.sort_simplices();
        Ok(new_id)
    }

    fn volume_of_ids(&self, ids: &[usize]) -> f64 {
        let verts: Vec<&[f64]> = ids.iter().map(|&i| self.points[i].coords()).collect();
        simplex_volume_from_coords(&verts)
    }

    /// (1/d!) |det| of the edge matrix.
    pub fn simplex_volume(&self, s: &Simplex) -> f64 {
        simplex_volume_from_coords(&self.vertex_coords(s))
    }

    pub fn total_volume(&self) -> f64 {
        self.simplices.iter().map(|s| self.simplex_volume(s)).sum()
    }

    /// Circumcenter and squared radius of a simplex, from the linear system
    /// equating distances to all vertices.
    pub fn circumsphere(&self, s: &Simplex) -> (Vec<f64>, f64) {
        circumsphere_from_coords(&self.vertex_coords(s))
    }

    fn in_circumsphere(&self, s: &Simplex, p: &[f64]) -> bool {
        let (center, r2) = self.circumsphere(s);
        let d2: f64 = p
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        // Ties count as inside.
        d2 <= r2 + 1e-12 * (1.0 + r2)
    }

    /// Vertices of the sub-simplex: each the mean of the other d vertices
    /// (face centers). For d = 1 that degenerates to the parent vertices, so
    /// the segment is shrunk toward its midpoint by a factor 0.5 instead.
    pub fn sub_simplex(&self, s: &Simplex) -> Vec<ParamPoint> {
        sub_simplex_of(&self.vertex_coords(s))
    }

    /// Facets of `s` lying on the hypercube boundary, each given by its d
    /// vertex ids.
    pub fn boundary_facets(&self, s: &Simplex) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for skip in 0..s.vertex_ids.len() {
            let facet: Vec<usize> = s
                .vertex_ids
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != skip)
                .map(|(_, &v)| v)
                .collect();
            let on_boundary = (0..self.dim).any(|j| {
                [0.0, 1.0].iter().any(|&b| {
                    facet
                        .iter()
                        .all(|&v| (self.points[v].coords()[j] - b).abs() < 1e-12)
                })
            });
            if on_boundary {
                out.push(facet);
            }
        }
        out
    }

    /// Draws a refinement point for `s`. Boundary simplices place the point
    /// on a random boundary facet with probability 0.5; otherwise the point
    /// is uniform inside the sub-simplex. Uniformity on a simplex comes from
    /// normalized exponential spacings over its vertices.
    pub fn sample_refinement_point<R: Rng>(&self, s: &Simplex, rng: &mut R) -> ParamPoint {
        let boundary = if self.dim >= 2 {
            self.boundary_facets(s)
        } else {
            Vec::new()
        };
        if !boundary.is_empty() && rng.random_bool(0.5) {
            let facet = &boundary[rng.random_range(0..boundary.len())];
            let verts: Vec<&[f64]> = facet.iter().map(|&i| self.points[i].coords()).collect();
            let sub = sub_simplex_of(&verts);
            let subverts: Vec<&[f64]> = sub.iter().map(|p| p.coords()).collect();
            uniform_in_simplex(&subverts, rng)
        } else {
            let sub = self.sub_simplex(s);
            let subverts: Vec<&[f64]> = sub.iter().map(|p| p.coords()).collect();
            uniform_in_simplex(&subverts, rng)
        }
    }

    /// Barycentric weights of `p` in `s`: signed volume ratios with vertex i
    /// replaced by `p`. The weights sum to 1 by construction.
    pub fn barycentric_weights(&self, s: &Simplex, p: &ParamPoint) -> Result<Vec<f64>, MeshError> {
        if p.dim() != self.dim {
            return Err(MeshError::DimensionMismatch(p.dim(), self.dim));
        }
        let verts = self.vertex_coords(s);
        let base = signed_volume(&verts);
        let mut weights = Vec::with_capacity(verts.len());
        for i in 0..verts.len() {
            let mut replaced = verts.clone();
            replaced[i] = p.coords();
            weights.push(signed_volume(&replaced) / base);
        }
        if let Some(&w) = weights
            .iter()
            .find(|&&w| w < -1e-8)
        {
            return Err(MeshError::OutsideSimplex(w));
        }
        Ok(weights)
    }

    /// First simplex (in deterministic order) whose closure contains `p`.
    pub fn locate(&self, p: &ParamPoint) -> Result<&Simplex, MeshError> {
        for s in &self.simplices {
            if self.barycentric_weights(s, p).is_ok() {
                return Ok(s);
            }
        }
        Err(MeshError::OutsideMesh)
    }

    /// Brute-force empty-circumsphere check: no point strictly inside any
    /// simplex circumsphere.
    pub fn is_delaunay(&self, slack: f64) -> bool {
        for s in &self.simplices {
            let (center, r2) = self.circumsphere(s);
            for (i, p) in self.points.iter().enumerate() {
                if s.vertex_ids.contains(&i) {
                    continue;
                }
                let d2: f64 = p
                    .coords()
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < r2 * (1.0 - slack) {
                    return false;
                }
            }
        }
        true
    }
}

fn permute_all(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_all(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn edge_matrix(verts: &[&[f64]]) -> DMatrix<f64> {
    let d = verts.len() - 1;
    DMatrix::from_fn(d, d, |i, j| verts[j + 1][i] - verts[0][i])
}

fn signed_volume(verts: &[&[f64]]) -> f64 {
    let d = verts.len() - 1;
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    edge_matrix(verts).determinant() / fact
}

/// (1/d!) |det| of the d x d edge matrix; 0 for degenerate input.
pub fn simplex_volume_from_coords(verts: &[&[f64]]) -> f64 {
    signed_volume(verts).abs()
}

fn circumsphere_from_coords(verts: &[&[f64]]) -> (Vec<f64>, f64) {
    let d = verts[0].len();
    let a = DMatrix::from_fn(verts.len() - 1, d, |i, j| 2.0 * (verts[i + 1][j] - verts[0][j]));
    let b = DVector::from_fn(verts.len() - 1, |i, _| {
        let ni: f64 = verts[i + 1].iter().map(|x| x * x).sum();
        let n0: f64 = verts[0].iter().map(|x| x * x).sum();
        ni - n0
    });
    let center = a
        .lu()
        .solve(&b)
        .unwrap_or_else(|| DVector::from_element(d, f64::INFINITY));
    let r2: f64 = verts[0]
        .iter()
        .zip(center.iter())
        .map(|(x, c)| (x - c) * (x - c))
        .sum();
    (center.iter().cloned().collect(), r2)
}

fn sub_simplex_of(verts: &[&[f64]]) -> Vec<ParamPoint> {
    let m = verts.len() - 1; // simplex dimension
    let d = verts[0].len();
    if m == 1 {
        let mid: Vec<f64> = (0..d).map(|j| 0.5 * (verts[0][j] + verts[1][j])).collect();
        return (0..2)
            .map(|i| {
                let coords = (0..d)
                    .map(|j| mid[j] + 0.5 * (verts[i][j] - mid[j]))
                    .collect();
                ParamPoint { coords }
            })
            .collect();
    }
    (0..=m)
        .map(|l| {
            let coords = (0..d)
                .map(|j| {
                    verts
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != l)
                        .map(|(_, v)| v[j])
                        .sum::<f64>()
                        / m as f64
                })
                .collect();
            ParamPoint { coords }
        })
        .collect()
}

fn uniform_in_simplex<R: Rng>(verts: &[&[f64]], rng: &mut R) -> ParamPoint {
    let spacings: Vec<f64> = (0..verts.len())
        .map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
        .collect();
    let total: f64 = spacings.iter().sum();
    let d = verts[0].len();
    let coords = (0..d)
        .map(|j| {
            verts
                .iter()
                .zip(&spacings)
                .map(|(v, w)| v[j] * w / total)
                .sum::<f64>()
                // Guard against rounding pushing a hull point outside [0,1].
                .clamp(0.0, 1.0)
        })
        .collect();
    ParamPoint { coords }
}
