//! The `export-mesh` subcommand: re-exports the triangulation of a results
//! directory as a single JSON document for downstream tooling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::output::load_results;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshExport {
    pub schema_version: u32,
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub simplices: Vec<Vec<usize>>,
}

pub fn cmd_export_mesh(results_dir: &Path, output: &Path) -> Result<MeshExport, CliError> {
    let results = load_results(results_dir)?;
    let export = MeshExport {
        schema_version: crate::output::SUMMARY_SCHEMA_VERSION,
        dim: results.mesh.dim(),
        points: results
            .mesh
            .points()
            .iter()
            .map(|p| p.coords().to_vec())
            .collect(),
        simplices: results
            .mesh
            .simplices()
            .iter()
            .map(|s| s.vertex_ids().to_vec())
            .collect(),
    };
    std::fs::write(
        output,
        serde_json::to_string_pretty(&export).map_err(CliError::other)?,
    )
    .map_err(|e| CliError::Other(format!("{}: {e}", output.display())))?;
    Ok(export)
}
