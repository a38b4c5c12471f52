//! Results-directory layout shared by `run` and consumed by `interpolate`
//! and `export-mesh`.
//!
//! A campaign directory contains:
//! - `config.json`: the fully resolved configuration
//! - `samples.csv`: one row per mesh point (coordinates, rank, recorded error)
//! - `points.csv`, `simplices.csv`: the final triangulation
//! - `scores.csv`: final element scores under the campaign metric
//! - `errors.csv`: recorded vertex angle errors
//! - `convergence.csv`: per-level mean element distance and bookkeeping
//! - `summary.json`: versioned machine-readable summary
//! - `snapshots/point_<i>.gfld`: every evaluated snapshot
//!
//! All CSVs carry headers, fixed column order, and shortest-roundtrip float
//! formatting, so identical campaigns produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use grassfield::io as gfio;
use grassfield::refine::{CampaignResult, LevelRecord, TerminationReason};
use grassfield::{ParamPoint, SimplexMesh};

use crate::config::RunConfig;
use crate::CliError;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub termination: TerminationReason,
    pub evaluations: usize,
    pub points: usize,
    pub simplices: usize,
    pub final_mean_element_distance: f64,
    pub levels: Vec<LevelRecord>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn csv_row(fields: &[String]) -> String {
    fields.join(",")
}

/// Writes the complete results directory for a finished campaign.
pub fn write_campaign_outputs(
    dir: &Path,
    config: &RunConfig,
    result: &CampaignResult,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir.join("snapshots"))
        .map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;

    let config_json =
        serde_json::to_string_pretty(config).map_err(CliError::other)?;
    write_file(&dir.join("config.json"), &config_json)?;

    let dim = result.mesh.dim();
    let mut samples = String::new();
    let coord_header: Vec<String> = (0..dim).map(|j| format!("xi_{j}")).collect();
    writeln!(samples, "index,{},rank,vertex_error", coord_header.join(",")).unwrap();
    for (i, p) in result.mesh.points().iter().enumerate() {
        let coords: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
        let err = match result.vertex_errors[i] {
            Some(e) => format!("{e}"),
            None => String::new(),
        };
        writeln!(
            samples,
            "{i},{},{},{err}",
            coords.join(","),
            result.decompositions[i].rank()
        )
        .unwrap();
    }
    write_file(&dir.join("samples.csv"), &samples)?;

    write_mesh_csvs(dir, &result.mesh)?;

    let scores = result
        .final_scores(config.campaign.metric, config.campaign.rank_policy)
        .map_err(CliError::other)?;
    let mut scores_csv = String::from("element,vertex_ids,score\n");
    for (k, s) in result.mesh.simplices().iter().enumerate() {
        let ids: Vec<String> = s.vertex_ids().iter().map(|i| i.to_string()).collect();
        writeln!(scores_csv, "{k},{},{}", ids.join(" "), scores[k]).unwrap();
    }
    write_file(&dir.join("scores.csv"), &scores_csv)?;

    let mut errors_csv = String::from("point,vertex_error\n");
    for (i, e) in result.vertex_errors.iter().enumerate() {
        if let Some(e) = e {
            writeln!(errors_csv, "{i},{e}").unwrap();
        }
    }
    write_file(&dir.join("errors.csv"), &errors_csv)?;

    let mut conv = String::from(
        "level,mean_element_distance,points,elements,max_score,selected,inserted,converged_elements\n",
    );
    for l in &result.levels {
        writeln!(
            conv,
            "{},{},{},{},{},{},{},{}",
            l.level,
            l.mean_element_distance,
            l.points,
            l.elements,
            l.max_score,
            l.selected,
            l.inserted,
            l.converged_elements
        )
        .unwrap();
    }
    write_file(&dir.join("convergence.csv"), &conv)?;

    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        termination: result.termination,
        evaluations: result.evaluations,
        points: result.mesh.points().len(),
        simplices: result.mesh.simplices().len(),
        final_mean_element_distance: scores.iter().sum::<f64>()
            / scores.len().max(1) as f64,
        levels: result.levels.clone(),
    };
    write_file(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(CliError::other)?,
    )?;

    for (i, snap) in result.snapshots.iter().enumerate() {
        let path = dir.join("snapshots").join(format!("point_{i}.gfld"));
        gfio::write_gfld(&path, snap).map_err(CliError::other)?;
    }
    Ok(())
}

/// Writes `points.csv` and `simplices.csv` for a mesh.
pub fn write_mesh_csvs(dir: &Path, mesh: &SimplexMesh) -> Result<(), CliError> {
    let dim = mesh.dim();
    let coord_header: Vec<String> = (0..dim).map(|j| format!("xi_{j}")).collect();
    let mut points_csv = format!("index,{}\n", coord_header.join(","));
    for (i, p) in mesh.points().iter().enumerate() {
        let coords: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
        writeln!(points_csv, "{i},{}", csv_row(&coords)).unwrap();
    }
    write_file(&dir.join("points.csv"), &points_csv)?;

    let mut simplices_csv = String::from("element,vertex_ids\n");
    for (k, s) in mesh.simplices().iter().enumerate() {
        let ids: Vec<String> = s.vertex_ids().iter().map(|i| i.to_string()).collect();
        writeln!(simplices_csv, "{k},{}", ids.join(" ")).unwrap();
    }
    write_file(&dir.join("simplices.csv"), &simplices_csv)
}

/// Reads a results directory back into a mesh plus the per-point snapshots.
///
/// The mesh is rebuilt by replaying the insertion order: the first
/// `2^d + 1` points are the initial design, the rest are inserted one by
/// one, which reproduces the original triangulation deterministically.
pub fn load_results(dir: &Path) -> Result<LoadedResults, CliError> {
    let config_text = std::fs::read_to_string(dir.join("config.json"))
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.join("config.json").display())))?;
    let config: RunConfig = serde_json::from_str(&config_text).map_err(CliError::config)?;
    let dim = config.model.dim();

    let mut snapshots = Vec::new();
    loop {
        let path = dir.join("snapshots").join(format!("point_{}.gfld", snapshots.len()));
        if !path.exists() {
            break;
        }
        snapshots.push(gfio::read_gfld(&path).map_err(CliError::other)?);
    }
    if snapshots.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no snapshots found",
            dir.display()
        )));
    }

    let mut mesh = SimplexMesh::initial_design(dim).map_err(CliError::other)?;
    let initial = mesh.points().len();
    if snapshots.len() < initial {
        return Err(CliError::Config(format!(
            "{}: {} snapshots cannot cover the {initial}-point initial design",
            dir.display(),
            snapshots.len()
        )));
    }
    for (i, snap) in snapshots.iter().enumerate() {
        if i < initial {
            // The stored parameter point must match the replayed design.
            if snap.params() != &mesh.points()[i] {
                return Err(CliError::Config(format!(
                    "{}: snapshot {i} does not match the initial design point",
                    dir.display()
                )));
            }
        } else {
            mesh.insert_point(snap.params().clone())
                .map_err(CliError::other)?;
        }
    }
    Ok(LoadedResults {
        config,
        mesh,
        snapshots,
    })
}

pub struct LoadedResults {
    pub config: RunConfig,
    pub mesh: SimplexMesh,
    pub snapshots: Vec<grassfield::FieldSnapshot>,
}

/// Parses a comma-separated parameter point, e.g. "0.3,0.7".
pub fn parse_point(text: &str, dim: usize) -> Result<ParamPoint, CliError> {
    let coords: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse()).collect();
    let coords = coords.map_err(|e| CliError::Config(format!("point {text:?}: {e}")))?;
    if coords.len() != dim {
        return Err(CliError::Config(format!(
            "point {text:?} has {} coordinates, model expects {dim}",
            coords.len()
        )));
    }
    // The mesh always triangulates the unit cube, so a coordinate outside
    // [0, 1] is an outside-mesh query, not a malformed config.
    ParamPoint::new(coords).map_err(|e| CliError::OutsideMesh(e.to_string()))
}

/// Resolves the output directory from flag or config.
pub fn resolve_output_dir(
    flag: Option<&Path>,
    config: &RunConfig,
) -> Result<PathBuf, CliError> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            CliError::Config("no output directory: pass --output or set output_dir".into())
        })
}
