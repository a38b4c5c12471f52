//! The `interpolate` subcommand: field prediction at an arbitrary parameter
//! point from a finished campaign directory.

use std::path::Path;

use grassfield::interp::{build_chart, choose_origin, interpolate_decomposition};
use grassfield::io::write_gfld;
use grassfield::model::Model;
use grassfield::refine::{score_delta, vertex_error};
use grassfield::snapshot::{decompose, SnapshotDecomposition};
use grassfield::{FieldSnapshot, ParamPoint};

use crate::output::{load_results, LoadedResults};
use crate::CliError;

pub struct InterpolationOutcome {
    pub prediction: FieldSnapshot,
    pub element_vertices: Vec<usize>,
    /// The element chart could not be built (vertex subspaces too far apart)
    /// and the nearest vertex stood in for the interpolant.
    pub used_fallback: bool,
    /// Present under `--verify`: (theta_error, frobenius_error).
    pub verification: Option<(f64, f64)>,
}

/// Interpolates inside the loaded results at `xi`; the containing simplex is
/// located by barycentric containment in deterministic element order.
///
/// Elements whose vertex subspaces are mutually singular (no common chart)
/// fall back to the decomposition of the vertex with the largest barycentric
/// weight, truncated to the element's common rank; the boolean in the return
/// value reports this.
pub fn interpolate_at(
    results: &LoadedResults,
    xi: &ParamPoint,
) -> Result<(SnapshotDecomposition, Vec<usize>, bool), CliError> {
    let simplex = results
        .mesh
        .locate(xi)
        .map_err(|e| CliError::OutsideMesh(e.to_string()))?;
    let weights = results
        .mesh
        .barycentric_weights(simplex, xi)
        .map_err(|e| CliError::OutsideMesh(e.to_string()))?;
    let decomps: Vec<SnapshotDecomposition> = simplex
        .vertex_ids()
        .iter()
        .map(|&i| decompose(&results.snapshots[i], results.config.campaign.rank_policy))
        .collect::<Result<_, _>>()
        .map_err(CliError::other)?;
    match build_chart(&decomps, choose_origin(&decomps))
        .and_then(|chart| interpolate_decomposition(&chart, &weights))
    {
        Ok(pred) => Ok((pred, simplex.vertex_ids().to_vec(), false)),
        Err(_) => {
            let nearest = weights
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            let common_rank = decomps.iter().map(|d| d.rank()).min().unwrap();
            let pred = decomps[nearest]
                .truncate(common_rank)
                .map_err(CliError::other)?;
            Ok((pred, simplex.vertex_ids().to_vec(), true))
        }
    }
}

pub fn cmd_interpolate(
    results_dir: &Path,
    xi: &ParamPoint,
    output: Option<&Path>,
    verify: bool,
) -> Result<InterpolationOutcome, CliError> {
    let results = load_results(results_dir)?;
    let (pred, element_vertices, used_fallback) = interpolate_at(&results, xi)?;
    let field = pred.reconstruct();
    let prediction = FieldSnapshot::new(field, xi.clone()).map_err(CliError::other)?;
    if let Some(path) = output {
        write_gfld(path, &prediction).map_err(CliError::other)?;
    }
    let verification = if verify {
        let model = Model::new(results.config.model.clone());
        let truth_snap = model.evaluate(xi).map_err(CliError::model)?;
        let truth = decompose(&truth_snap, results.config.campaign.rank_policy)
            .map_err(CliError::other)?;
        let delta = score_delta(
            results.config.campaign.metric,
            results.config.campaign.rank_policy,
            &truth,
            &pred,
        )
        .map_err(CliError::other)?;
        let theta = vertex_error(delta, truth.rank(), pred.rank());
        let frob = (prediction.field() - truth_snap.field()).norm();
        Some((theta, frob))
    } else {
        None
    };
    Ok(InterpolationOutcome {
        prediction,
        element_vertices,
        used_fallback,
        verification,
    })
}
