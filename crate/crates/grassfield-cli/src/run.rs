//! The `run` subcommand: executes an adaptive campaign and writes the
//! results directory.

use std::path::Path;

use grassfield::model::Model;
use grassfield::refine::{run_campaign_parallel, CampaignResult, RefineError};

use crate::config::RunConfig;
use crate::output::write_campaign_outputs;
use crate::CliError;

pub fn map_refine_error(e: RefineError) -> CliError {
    match e {
        RefineError::Model(m) => CliError::Model(m.to_string()),
        RefineError::BadFraction(_) | RefineError::BadThreshold(_) | RefineError::BudgetTooSmall(..) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Other(other.to_string()),
    }
}

/// Runs the campaign described by `config`, with model evaluations spread
/// over at most `jobs` threads. Budget exhaustion is a normal outcome,
/// reported through the summary rather than the exit code.
pub fn execute_campaign(config: &RunConfig, jobs: usize) -> Result<CampaignResult, CliError> {
    if jobs == 0 {
        return Err(CliError::Config("jobs must be at least 1".into()));
    }
    let model = Model::new(config.model.clone());
    run_campaign_parallel(config.model.dim(), &config.campaign, jobs, |p| {
        model.evaluate(p)
    })
    .map_err(map_refine_error)
}

pub fn cmd_run(
    config: &RunConfig,
    output_dir: &Path,
    jobs: usize,
) -> Result<CampaignResult, CliError> {
    let result = execute_campaign(config, jobs)?;
    write_campaign_outputs(output_dir, config, &result)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use grassfield::model::ModelSpec;
    use grassfield::refine::{CampaignConfig, TerminationReason};
    use grassfield::snapshot::RankPolicy;

    fn transition_config(seed: u64) -> RunConfig {
        RunConfig {
            model: ModelSpec::synthetic_transition(2, 16, 12),
            campaign: CampaignConfig {
                rank_policy: RankPolicy::GlobalRank(3),
                max_evaluations: 40,
                seed,
                ..CampaignConfig::default()
            },
            output_dir: None,
        }
    }

    #[test]
    fn run_writes_the_full_results_directory() {
        let dir = tempfile::tempdir().unwrap();
        let config = transition_config(1);
        let result = cmd_run(&config, dir.path(), 1).unwrap();
        for name in [
            "config.json",
            "samples.csv",
            "points.csv",
            "simplices.csv",
            "scores.csv",
            "errors.csv",
            "convergence.csv",
            "summary.json",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        for i in 0..result.mesh.points().len() {
            assert!(dir
                .path()
                .join("snapshots")
                .join(format!("point_{i}.gfld"))
                .exists());
        }
    }

    #[test]
    fn identical_seeds_give_byte_identical_outputs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let config = transition_config(5);
        cmd_run(&config, a.path(), 1).unwrap();
        cmd_run(&config, b.path(), 1).unwrap();
        for name in ["samples.csv", "scores.csv", "convergence.csv"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs");
        }
    }

    #[test]
    fn constant_subspace_model_converges_with_zero_distance() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            model: ModelSpec::synthetic_smooth(2, 16, 12),
            campaign: CampaignConfig {
                rank_policy: RankPolicy::GlobalRank(3),
                max_evaluations: 40,
                ..CampaignConfig::default()
            },
            output_dir: None,
        };
        let result = cmd_run(&config, dir.path(), 1).unwrap();
        assert_eq!(result.termination, TerminationReason::Converged);
        let conv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        let rows: Vec<&str> = conv.lines().skip(1).collect();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].starts_with("0,0,"), "unexpected row {:?}", rows[0]);
    }

    #[test]
    fn results_directory_reloads_into_the_same_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let config = transition_config(2);
        let result = cmd_run(&config, dir.path(), 1).unwrap();
        let loaded = crate::output::load_results(dir.path()).unwrap();
        assert_eq!(loaded.mesh.points(), result.mesh.points());
        assert_eq!(loaded.mesh.simplices(), result.mesh.simplices());
        assert_eq!(loaded.config, config);
    }
}
