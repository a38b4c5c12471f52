//! Adaptive refinement: element scoring, percentile selection, convergence
//! bookkeeping, and the campaign driver.
//!
//! Each mesh element is scored by the sum of pairwise subspace distances
//! between its vertex decompositions, each vertex pair counted once. The
//! top fraction of non-converged elements (by a percentile threshold, ties
//! included) receives one new sample per level. New vertices record a
//! normalized angle error comparing the in-element prediction against the
//! true model response; an element whose vertices carry enough small
//! recorded errors is frozen and never refined again.
//!
//! The driver is deterministic for a fixed seed: mesh traversal order,
//! selection order, and the refinement-point stream are all reproducible.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grassmann::{distance_equidim, distance_infinite, GrassmannError, MetricKind};
use crate::interp::{build_chart, choose_origin, interpolate_decomposition, InterpError};
use crate::mesh::{MeshError, ParamPoint, Simplex, SimplexMesh};
use crate::model::ModelError;
use crate::snapshot::{decompose, FieldSnapshot, RankPolicy, SnapshotDecomposition, SnapshotError};
use crate::tol;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("selection fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("angle threshold {0} must be positive")]
    BadThreshold(f64),
    #[error("evaluation budget {0} too small for the initial design ({1} points)")]
    BudgetTooSmall(usize, usize),
    #[error("worker pool setup failed: {0}")]
    Pool(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Grassmann(#[from] GrassmannError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// Pairwise subspace distance used in scoring. Fixed-rank policies compare
/// equal-rank subspaces directly; tolerance policies can produce mixed ranks
/// and use the rank-padded distance.
pub fn score_delta(
    metric: MetricKind,
    policy: RankPolicy,
    a: &SnapshotDecomposition,
    b: &SnapshotDecomposition,
) -> Result<f64, GrassmannError> {
    match policy {
        RankPolicy::GlobalRank(_) => distance_equidim(metric, a.left(), b.left()),
        RankPolicy::Tolerance { .. } => distance_infinite(metric, a.left(), b.left()),
    }
}

/// Element score: sum of the pairwise vertex distances, each pair once.
pub fn pairwise_score(deltas: &[f64]) -> f64 {
    deltas.iter().sum()
}

/// Score of one element from its vertex decompositions.
pub fn element_score(
    metric: MetricKind,
    policy: RankPolicy,
    decomps: &[&SnapshotDecomposition],
) -> Result<f64, GrassmannError> {
    let mut deltas = Vec::new();
    for i in 0..decomps.len() {
        for j in (i + 1)..decomps.len() {
            deltas.push(score_delta(metric, policy, decomps[i], decomps[j])?);
        }
    }
    Ok(pairwise_score(&deltas))
}

/// Mean element score over the mesh.
pub fn mean_element_distance(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Nearest-rank `alpha`-quantile of the score vector.
pub fn selection_threshold(scores: &[f64], alpha: f64) -> Result<f64, RefineError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RefineError::BadFraction(alpha));
    }
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted[((alpha * n as f64).ceil() as usize).min(n - 1)])
}

/// Indices of the elements to refine: those whose score reaches the
/// `alpha`-percentile threshold of the candidate scores, ties included.
/// With 10 candidates and alpha = 0.8 this selects the top 2.
pub fn select_for_refinement(scores: &[f64], alpha: f64) -> Result<Vec<usize>, RefineError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RefineError::BadFraction(alpha));
    }
    if scores.is_empty() {
        return Ok(Vec::new());
    }
    let threshold = selection_threshold(scores, alpha)?;
    Ok((0..scores.len())
        .filter(|&i| scores[i] >= threshold)
        .collect())
}

/// Normalized angle error of a new vertex: the subspace distance between
/// prediction and truth spread over the smaller of the two ranks.
pub fn vertex_error(delta: f64, rank_true: usize, rank_pred: usize) -> f64 {
    (delta / rank_true.min(rank_pred).max(1) as f64).sqrt()
}

/// Campaign parameters. `alpha` is the selection percentile, `theta_ref` the
/// per-vertex angle-error threshold for freezing elements.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub metric: MetricKind,
    pub rank_policy: RankPolicy,
    pub alpha: f64,
    pub theta_ref: f64,
    pub max_evaluations: usize,
    pub max_levels: usize,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Grassmann,
            rank_policy: RankPolicy::default(),
            alpha: 0.8,
            theta_ref: std::f64::consts::PI / 15.0,
            max_evaluations: 200,
            max_levels: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    BudgetExhausted,
    MaxLevels,
}

/// Per-level audit record of the campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub points: usize,
    pub elements: usize,
    pub mean_element_distance: f64,
    pub max_score: f64,
    pub selected: usize,
    pub inserted: usize,
    pub converged_elements: usize,
}

/// Everything the campaign produced: the final mesh, one snapshot and
/// decomposition per mesh point (same order as the point table), recorded
/// vertex errors, per-level audit records, and why it stopped.
pub struct CampaignResult {
    pub mesh: SimplexMesh,
    pub snapshots: Vec<FieldSnapshot>,
    pub decompositions: Vec<SnapshotDecomposition>,
    /// Recorded angle error per point index; initial-design points have none.
    pub vertex_errors: Vec<Option<f64>>,
    pub levels: Vec<LevelRecord>,
    pub termination: TerminationReason,
    pub evaluations: usize,
}

impl CampaignResult {
    /// Element scores of the final mesh under the campaign's metric/policy.
    pub fn final_scores(
        &self,
        metric: MetricKind,
        policy: RankPolicy,
    ) -> Result<Vec<f64>, GrassmannError> {
        self.mesh
            .simplices()
            .iter()
            .map(|s| {
                let d: Vec<&SnapshotDecomposition> = s
                    .vertex_ids()
                    .iter()
                    .map(|&i| &self.decompositions[i])
                    .collect();
                element_score(metric, policy, &d)
            })
            .collect()
    }
}

struct CampaignState {
    mesh: SimplexMesh,
    snapshots: Vec<FieldSnapshot>,
    decomps: Vec<SnapshotDecomposition>,
    vertex_errors: Vec<Option<f64>>,
    frozen: HashSet<Vec<usize>>,
    evaluations: usize,
}

impl CampaignState {
    fn element_decomps(&self, s: &Simplex) -> Vec<&SnapshotDecomposition> {
        s.vertex_ids().iter().map(|&i| &self.decomps[i]).collect()
    }

    /// An element is frozen once enough of its vertices carry a small
    /// recorded angle error: at least d of the d+1 vertices.
    fn is_converged(&mut self, s: &Simplex, theta_ref: f64) -> bool {
        let key = s.vertex_ids().to_vec();
        if self.frozen.contains(&key) {
            return true;
        }
        let good = s
            .vertex_ids()
            .iter()
            .filter(|&&i| matches!(self.vertex_errors[i], Some(e) if e <= theta_ref))
            .count();
        if good >= self.mesh.dim() {
            self.frozen.insert(key);
            true
        } else {
            false
        }
    }
}

/// Predicted angle error for a newly sampled point inside `parent`: build the
/// element chart, interpolate at the point, and compare against the true
/// decomposition. Any chart or interpolation failure is treated as maximal
/// error (pi/2) rather than aborting the campaign.
fn predicted_vertex_error(
    state: &CampaignState,
    parent: &Simplex,
    p: &ParamPoint,
    truth: &SnapshotDecomposition,
    metric: MetricKind,
    policy: RankPolicy,
) -> f64 {
    let decomps: Vec<SnapshotDecomposition> = parent
        .vertex_ids()
        .iter()
        .map(|&i| state.decomps[i].clone())
        .collect();
    let fallback = std::f64::consts::FRAC_PI_2;
    let Ok(weights) = state.mesh.barycentric_weights(parent, p) else {
        return fallback;
    };
    let Ok(chart) = build_chart(&decomps, choose_origin(&decomps)) else {
        return fallback;
    };
    let Ok(pred) = interpolate_decomposition(&chart, &weights) else {
        return fallback;
    };
    match score_delta(metric, policy, truth, &pred) {
        Ok(delta) => vertex_error(delta, truth.rank(), pred.rank()),
        Err(_) => fallback,
    }
}

/// Runs the adaptive campaign: evaluate the initial design, then per level
/// score all elements, freeze converged ones, refine the top fraction of the
/// rest, and stop on convergence, budget exhaustion, or the level cap.
pub fn run_campaign<F>(
    dim: usize,
    config: &CampaignConfig,
    mut evaluate: F,
) -> Result<CampaignResult, RefineError>
where
    F: FnMut(&ParamPoint) -> Result<FieldSnapshot, ModelError>,
{
    run_campaign_with(dim, config, |points| {
        points.iter().map(&mut evaluate).collect()
    })
}

/// [`run_campaign`] with model evaluations fanned out over at most `jobs`
/// worker threads. Each level's batch is merged in sampling order, so the
/// result is identical to the sequential variant for a pure model.
pub fn run_campaign_parallel<F>(
    dim: usize,
    config: &CampaignConfig,
    jobs: usize,
    evaluate: F,
) -> Result<CampaignResult, RefineError>
where
    F: Fn(&ParamPoint) -> Result<FieldSnapshot, ModelError> + Sync,
{
    if jobs <= 1 {
        return run_campaign(dim, config, evaluate);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RefineError::Pool(e.to_string()))?;
    run_campaign_with(dim, config, |points| {
        pool.install(|| points.par_iter().map(&evaluate).collect())
    })
}

fn run_campaign_with<B>(
    dim: usize,
    config: &CampaignConfig,
    mut evaluate_batch: B,
) -> Result<CampaignResult, RefineError>
where
    B: FnMut(&[ParamPoint]) -> Result<Vec<FieldSnapshot>, ModelError>,
{
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(RefineError::BadFraction(config.alpha));
    }
    if config.theta_ref <= 0.0 {
        return Err(RefineError::BadThreshold(config.theta_ref));
    }
    let mesh = SimplexMesh::initial_design(dim)?;
    if config.max_evaluations < mesh.points().len() {
        return Err(RefineError::BudgetTooSmall(
            config.max_evaluations,
            mesh.points().len(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = CampaignState {
        snapshots: Vec::new(),
        decomps: Vec::new(),
        vertex_errors: Vec::new(),
        frozen: HashSet::new(),
        evaluations: 0,
        mesh,
    };
    let initial_points = state.mesh.points().to_vec();
    for snap in evaluate_batch(&initial_points)? {
        state.decomps.push(decompose(&snap, config.rank_policy)?);
        state.snapshots.push(snap);
        state.vertex_errors.push(None);
        state.evaluations += 1;
    }

    let mut levels = Vec::new();
    let mut termination = TerminationReason::MaxLevels;
    for level in 0..config.max_levels {
        let simplices = state.mesh.simplices().to_vec();
        let mut scores = Vec::with_capacity(simplices.len());
        for s in &simplices {
            scores.push(element_score(
                config.metric,
                config.rank_policy,
                &state.element_decomps(s),
            )?);
        }
        let mean = mean_element_distance(&scores);
        let max_score = scores.iter().cloned().fold(0.0f64, f64::max);

        // No subspace variation anywhere: the surrogate is already exact up
        // to the truncation and there is nothing to learn from new samples.
        if max_score < tol::ZERO_SCORE {
            levels.push(LevelRecord {
                level,
                points: state.mesh.points().len(),
                elements: simplices.len(),
                mean_element_distance: mean,
                max_score,
                selected: 0,
                inserted: 0,
                converged_elements: simplices.len(),
            });
            termination = TerminationReason::Converged;
            break;
        }

        let mut candidates = Vec::new();
        let mut converged_elements = 0usize;
        for (k, s) in simplices.iter().enumerate() {
            if state.is_converged(s, config.theta_ref) {
                converged_elements += 1;
            } else {
                candidates.push(k);
            }
        }
        if candidates.is_empty() {
            levels.push(LevelRecord {
                level,
                points: state.mesh.points().len(),
                elements: simplices.len(),
                mean_element_distance: mean,
                max_score,
                selected: 0,
                inserted: 0,
                converged_elements,
            });
            termination = TerminationReason::Converged;
            break;
        }

        // The quantile threshold is taken over the full score vector, but
        // only non-converged elements can be selected.
        let threshold = selection_threshold(&scores, config.alpha)?;
        let mut selected: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&k| scores[k] >= threshold)
            .collect();
        if selected.is_empty() {
            // Guarantee progress: refine at least the worst candidate.
            let worst = candidates
                .iter()
                .copied()
                .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
                .unwrap();
            selected.push(worst);
        }

        let mut inserted = 0usize;
        let mut budget_hit = false;
        let mut batch: Vec<(usize, ParamPoint)> = Vec::new();
        for &k in &selected {
            if state.evaluations + batch.len() >= config.max_evaluations {
                budget_hit = true;
                break;
            }
            let p = state.mesh.sample_refinement_point(&simplices[k], &mut rng);
            batch.push((k, p));
        }
        let batch_points: Vec<ParamPoint> = batch.iter().map(|(_, p)| p.clone()).collect();
        let batch_snaps = evaluate_batch(&batch_points)?;
        for ((k, p), snap) in batch.into_iter().zip(batch_snaps) {
            // The parent may have been split by an earlier insertion this
            // level; its vertex decompositions stay valid either way, and the
            // sampled point still lies in its closure, so the prediction is
            // still well defined.
            let parent = &simplices[k];
            state.evaluations += 1;
            let truth = decompose(&snap, config.rank_policy)?;
            let theta = predicted_vertex_error(
                &state,
                parent,
                &p,
                &truth,
                config.metric,
                config.rank_policy,
            );
            match state.mesh.insert_point(p) {
                Ok(id) => {
                    debug_assert_eq!(id, state.decomps.len());
                    state.decomps.push(truth);
                    state.snapshots.push(snap);
                    state.vertex_errors.push(Some(theta));
                    inserted += 1;
                }
                // A duplicate draw wastes one evaluation but is harmless.
                Err(MeshError::DuplicatePoint(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }

        levels.push(LevelRecord {
            level,
            points: state.mesh.points().len(),
            elements: simplices.len(),
            mean_element_distance: mean,
            max_score,
            selected: selected.len(),
            inserted,
            converged_elements,
        });
        if budget_hit || state.evaluations >= config.max_evaluations {
            termination = TerminationReason::BudgetExhausted;
            break;
        }
    }

    Ok(CampaignResult {
        mesh: state.mesh,
        snapshots: state.snapshots,
        decompositions: state.decomps,
        vertex_errors: state.vertex_errors,
        levels,
        termination,
        evaluations: state.evaluations,
    })
}
