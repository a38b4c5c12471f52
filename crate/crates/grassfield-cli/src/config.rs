//! Run configuration: campaign parameters plus the model under study.
//!
//! Loaded from a JSON file; any campaign field can be overridden on the
//! command line with `--set key=value`, and the environment variable
//! `GRASSFIELD_SEED` overrides the seed last.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use grassfield::model::ModelSpec;
use grassfield::refine::CampaignConfig;
use grassfield::snapshot::RankPolicy;
use grassfield::MetricKind;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub campaign: CampaignConfig,
    /// Default results directory; a `--output` flag takes precedence.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(CliError::config)?;
        if !(0.0..=1.0).contains(&self.campaign.alpha) {
            return Err(CliError::Config(format!(
                "alpha {} outside [0, 1]",
                self.campaign.alpha
            )));
        }
        if self.campaign.theta_ref <= 0.0 {
            return Err(CliError::Config(format!(
                "theta_ref {} must be positive",
                self.campaign.theta_ref
            )));
        }
        if self.campaign.max_levels == 0 {
            return Err(CliError::Config("max_levels must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loads, overrides, and validates a run configuration. Order: file, then
/// `--set` pairs left to right, then `GRASSFIELD_SEED`.
pub fn load_config(path: &Path, sets: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for pair in sets {
        apply_override(&mut config, pair)?;
    }
    if let Ok(seed) = std::env::var("GRASSFIELD_SEED") {
        config.campaign.seed = seed
            .parse()
            .map_err(|_| CliError::Config(format!("GRASSFIELD_SEED: bad seed {seed:?}")))?;
    }
    config.validate()?;
    Ok(config)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("--set {key}: cannot parse value {value:?}")))
}

/// Applies one `key=value` override to the campaign section.
pub fn apply_override(config: &mut RunConfig, pair: &str) -> Result<(), CliError> {
    let (key, value) = pair
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {pair}: expected key=value")))?;
    let c = &mut config.campaign;
    match key {
        "alpha" => c.alpha = parse_value(key, value)?,
        "theta_ref" => c.theta_ref = parse_value(key, value)?,
        "max_evaluations" => c.max_evaluations = parse_value(key, value)?,
        "max_levels" => c.max_levels = parse_value(key, value)?,
        "seed" => c.seed = parse_value(key, value)?,
        "metric" => {
            c.metric = match value {
                "grassmann" => MetricKind::Grassmann,
                "chordal" => MetricKind::Chordal,
                "procrustes" => MetricKind::Procrustes,
                _ => {
                    return Err(CliError::Config(format!(
                        "--set metric: unknown metric {value:?}"
                    )))
                }
            }
        }
        // rank_policy=global_rank:R or rank_policy=tolerance[:SCALE]
        "rank_policy" => {
            c.rank_policy = match value.split_once(':') {
                Some(("global_rank", r)) => RankPolicy::GlobalRank(parse_value(key, r)?),
                Some(("tolerance", s)) => RankPolicy::Tolerance {
                    scale: parse_value(key, s)?,
                },
                None if value == "tolerance" => RankPolicy::Tolerance { scale: 1.0 },
                _ => {
                    return Err(CliError::Config(format!(
                        "--set rank_policy: expected global_rank:R or tolerance[:SCALE], got {value:?}"
                    )))
                }
            }
        }
        "output_dir" => config.output_dir = Some(PathBuf::from(value)),
        _ => return Err(CliError::Config(format!("--set: unknown key {key:?}"))),
    }
    Ok(())
}
