//! The `compare-random` subcommand: adaptive campaign versus a
//! uniform-random design of equal budget.
//!
//! Both designs are triangulated and the surrogate error is probed at every
//! simplex center: the in-element prediction is compared against a fresh
//! model evaluation, yielding an angle error and a Frobenius error per
//! element. Raw per-element rows and summary statistics are written.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use grassfield::interp::{build_chart, choose_origin, interpolate_decomposition};
use grassfield::mesh::MeshError;
use grassfield::model::Model;
use grassfield::refine::{score_delta, vertex_error};
use grassfield::snapshot::{decompose, SnapshotDecomposition};
use grassfield::{ParamPoint, SimplexMesh};

use crate::config::RunConfig;
use crate::run::execute_campaign;
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorStats {
    pub elements: usize,
    pub mean_theta: f64,
    pub std_theta: f64,
    pub mean_frobenius: f64,
    pub std_frobenius: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub budget: usize,
    pub seed: u64,
    pub adaptive: ErrorStats,
    pub random: ErrorStats,
}

pub struct ElementErrors {
    pub centers: Vec<Vec<f64>>,
    pub thetas: Vec<f64>,
    pub frobenius: Vec<f64>,
}

fn stats(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

impl ElementErrors {
    pub fn summarize(&self) -> ErrorStats {
        let (mean_theta, std_theta) = stats(&self.thetas);
        let (mean_frobenius, std_frobenius) = stats(&self.frobenius);
        ErrorStats {
            elements: self.thetas.len(),
            mean_theta,
            std_theta,
            mean_frobenius,
            std_frobenius,
        }
    }
}

/// Probes the surrogate error of a sampled design at every simplex center.
pub fn probe_simplex_centers(
    mesh: &SimplexMesh,
    decomps: &[SnapshotDecomposition],
    model: &Model,
    config: &RunConfig,
) -> Result<ElementErrors, CliError> {
    let mut centers = Vec::new();
    let mut thetas = Vec::new();
    let mut frobenius = Vec::new();
    let nverts = mesh.dim() + 1;
    let weights = vec![1.0 / nverts as f64; nverts];
    for s in mesh.simplices() {
        let center: Vec<f64> = (0..mesh.dim())
            .map(|j| {
                s.vertex_ids()
                    .iter()
                    .map(|&i| mesh.points()[i].coords()[j])
                    .sum::<f64>()
                    / nverts as f64
            })
            .collect();
        let xi = ParamPoint::new(center.clone()).map_err(CliError::other)?;
        let truth_snap = model.evaluate(&xi).map_err(CliError::model)?;
        let truth = decompose(&truth_snap, config.campaign.rank_policy).map_err(CliError::other)?;
        let verts: Vec<SnapshotDecomposition> = s
            .vertex_ids()
            .iter()
            .map(|&i| decomps[i].clone())
            .collect();
        // Chart failures count as maximal angle error with the origin-vertex
        // truncation standing in for the prediction.
        let (theta, frob) = match build_chart(&verts, choose_origin(&verts))
            .and_then(|chart| interpolate_decomposition(&chart, &weights))
        {
            Ok(pred) => {
                let delta = score_delta(
                    config.campaign.metric,
                    config.campaign.rank_policy,
                    &truth,
                    &pred,
                )
                .map_err(CliError::other)?;
                (
                    vertex_error(delta, truth.rank(), pred.rank()),
                    (pred.reconstruct() - truth_snap.field()).norm(),
                )
            }
            Err(_) => {
                let fallback = &verts[choose_origin(&verts)];
                (
                    std::f64::consts::FRAC_PI_2,
                    (fallback.reconstruct() - truth_snap.field()).norm(),
                )
            }
        };
        centers.push(center);
        thetas.push(theta);
        frobenius.push(frob);
    }
    Ok(ElementErrors {
        centers,
        thetas,
        frobenius,
    })
}

/// Builds and evaluates a uniform-random design of exactly `budget` points
/// (initial design included).
pub fn random_design(
    config: &RunConfig,
    budget: usize,
    seed: u64,
) -> Result<(SimplexMesh, Vec<SnapshotDecomposition>), CliError> {
    let model = Model::new(config.model.clone());
    let dim = config.model.dim();
    let mut mesh = SimplexMesh::initial_design(dim).map_err(CliError::other)?;
    if budget < mesh.points().len() {
        return Err(CliError::Config(format!(
            "budget {budget} below the {}-point initial design",
            mesh.points().len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while mesh.points().len() < budget {
        let coords: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        match mesh.insert_point(ParamPoint::new(coords).unwrap()) {
            Ok(_) => {}
            Err(MeshError::DuplicatePoint(_)) => continue,
            Err(e) => return Err(CliError::other(e)),
        }
    }
    let decomps: Vec<SnapshotDecomposition> = mesh
        .points()
        .iter()
        .map(|p| {
            let snap = model.evaluate(p).map_err(CliError::model)?;
            decompose(&snap, config.campaign.rank_policy).map_err(CliError::other)
        })
        .collect::<Result<_, _>>()?;
    Ok((mesh, decomps))
}

fn write_errors_csv(path: &Path, dim: usize, errors: &ElementErrors) -> Result<(), CliError> {
    let coord_header: Vec<String> = (0..dim).map(|j| format!("center_{j}")).collect();
    let mut csv = format!("element,{},theta,frobenius\n", coord_header.join(","));
    for (k, center) in errors.centers.iter().enumerate() {
        let coords: Vec<String> = center.iter().map(|c| format!("{c}")).collect();
        writeln!(
            csv,
            "{k},{},{},{}",
            coords.join(","),
            errors.thetas[k],
            errors.frobenius[k]
        )
        .unwrap();
    }
    std::fs::write(path, csv).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn cmd_compare_random(
    config: &RunConfig,
    budget: usize,
    output_dir: &Path,
    jobs: usize,
) -> Result<ComparisonReport, CliError> {
    std::fs::create_dir_all(output_dir)
        .map_err(|e| CliError::Other(format!("{}: {e}", output_dir.display())))?;
    let model = Model::new(config.model.clone());

    let mut adaptive_config = config.clone();
    adaptive_config.campaign.max_evaluations = budget;
    let campaign = execute_campaign(&adaptive_config, jobs)?;
    let adaptive_errors = probe_simplex_centers(
        &campaign.mesh,
        &campaign.decompositions,
        &model,
        config,
    )?;

    let (rmesh, rdecomps) = random_design(config, campaign.mesh.points().len(), config.campaign.seed)?;
    let random_errors = probe_simplex_centers(&rmesh, &rdecomps, &model, config)?;

    let dim = config.model.dim();
    write_errors_csv(&output_dir.join("adaptive_errors.csv"), dim, &adaptive_errors)?;
    write_errors_csv(&output_dir.join("random_errors.csv"), dim, &random_errors)?;

    let report = ComparisonReport {
        schema_version: crate::output::SUMMARY_SCHEMA_VERSION,
        budget,
        seed: config.campaign.seed,
        adaptive: adaptive_errors.summarize(),
        random: random_errors.summarize(),
    };
    std::fs::write(
        output_dir.join("comparison.json"),
        serde_json::to_string_pretty(&report).map_err(CliError::other)?,
    )
    .map_err(CliError::other)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use grassfield::model::ModelSpec;
    use grassfield::refine::CampaignConfig;
    use grassfield::snapshot::RankPolicy;

    fn config(seed: u64) -> RunConfig {
        RunConfig {
            model: ModelSpec::synthetic_transition(2, 16, 12),
            campaign: CampaignConfig {
                rank_policy: RankPolicy::GlobalRank(3),
                seed,
                ..CampaignConfig::default()
            },
            output_dir: None,
        }
    }

    #[test]
    fn constant_model_reports_zero_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(1);
        c.model = ModelSpec::synthetic_smooth(2, 16, 12);
        let report = cmd_compare_random(&c, 20, dir.path(), 1).unwrap();
        // The smooth family's factors are parameter independent, so only the
        // singular values vary and those interpolate to first order.
        assert!(report.adaptive.mean_theta < 1e-6);
        assert!(report.random.mean_theta < 1e-6);
    }

    #[test]
    fn report_row_counts_match_simplex_counts() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_compare_random(&config(2), 40, dir.path(), 1).unwrap();
        for (name, stats) in [
            ("adaptive_errors.csv", &report.adaptive),
            ("random_errors.csv", &report.random),
        ] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(text.lines().count() - 1, stats.elements, "{name}");
        }
    }

    #[test]
    fn random_design_hits_the_budget_exactly() {
        let (mesh, decomps) = random_design(&config(3), 25, 3).unwrap();
        assert_eq!(mesh.points().len(), 25);
        assert_eq!(decomps.len(), 25);
    }
}
