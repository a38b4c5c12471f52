//! The `distance` subcommand: principal angles and subspace distances
//! between the left factors of two snapshot files.

use std::path::Path;

use grassfield::grassmann::{
    distance_equidim_classic_procrustes, distance_infinite, principal_angles,
};
use grassfield::io::read_snapshot;
use grassfield::snapshot::{decompose, RankPolicy, SnapshotDecomposition};
use grassfield::MetricKind;

use crate::CliError;

#[derive(Debug)]
pub struct DistanceReport {
    pub angles: Vec<f64>,
    pub rank_a: usize,
    pub rank_b: usize,
    /// (metric name, distance) pairs in a fixed order.
    pub distances: Vec<(String, f64)>,
}

impl DistanceReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ranks: {} and {}\n", self.rank_a, self.rank_b));
        let angles: Vec<String> = self.angles.iter().map(|a| format!("{a:.6}")).collect();
        out.push_str(&format!("principal angles: [{}]\n", angles.join(", ")));
        for (name, d) in &self.distances {
            out.push_str(&format!("{name}: {d:.6}\n"));
        }
        out
    }
}

fn load_decomposition(path: &Path, policy: RankPolicy) -> Result<SnapshotDecomposition, CliError> {
    let snap = read_snapshot(path).map_err(CliError::config)?;
    decompose(&snap, policy).map_err(CliError::config)
}

/// Computes the distance report. `metric = None` with `all = true` prints
/// every metric in both Procrustes conventions.
pub fn cmd_distance(
    path_a: &Path,
    path_b: &Path,
    metric: MetricKind,
    all: bool,
    rank: Option<usize>,
) -> Result<DistanceReport, CliError> {
    let policy = match rank {
        Some(r) => RankPolicy::GlobalRank(r),
        None => RankPolicy::default(),
    };
    let a = load_decomposition(path_a, policy)?;
    let b = load_decomposition(path_b, policy)?;
    let angles = principal_angles(a.left(), b.left()).map_err(CliError::config)?;
    let mut distances = Vec::new();
    let kinds: Vec<MetricKind> = if all {
        MetricKind::ALL.to_vec()
    } else {
        vec![metric]
    };
    for kind in kinds {
        let d = distance_infinite(kind, a.left(), b.left()).map_err(CliError::config)?;
        distances.push((kind.name().to_string(), d));
    }
    if all && a.rank() == b.rank() {
        let d = distance_equidim_classic_procrustes(a.left(), b.left())
            .map_err(CliError::config)?;
        distances.push(("procrustes_classic".to_string(), d));
    }
    Ok(DistanceReport {
        angles: angles.angles().to_vec(),
        rank_a: a.rank(),
        rank_b: b.rank(),
        distances,
    })
}
