use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grassfield::refine::TerminationReason;
use grassfield::MetricKind;
use grassfield_cli::{compare, config, distance, export, interpolate, output, run, CliError};

#[derive(Parser)]
#[command(name = "grassfield", version, about = "Adaptive sampling of full-field surrogate models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an adaptive campaign from a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Results directory (overrides output_dir in the config).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override a campaign field, e.g. --set seed=3 or
        /// --set rank_policy=global_rank:3. Repeatable.
        #[arg(long = "set")]
        sets: Vec<String>,
        /// Maximum number of threads for model evaluations.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Principal angles and subspace distance between two snapshot files.
    Distance {
        file_a: PathBuf,
        file_b: PathBuf,
        #[arg(long, default_value = "grassmann")]
        metric: String,
        /// Print every metric, including the classic Procrustes convention.
        #[arg(long)]
        all: bool,
        /// Truncate both snapshots to this rank before comparing.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Interpolate the field at a parameter point from a results directory.
    Interpolate {
        #[arg(long)]
        results: PathBuf,
        /// Comma-separated coordinates in [0,1], e.g. "0.3,0.7".
        #[arg(long)]
        xi: String,
        /// Write the predicted snapshot here (binary format).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also evaluate the model at xi and report the errors.
        #[arg(long)]
        verify: bool,
    },
    /// Compare the adaptive campaign against a uniform-random design.
    CompareRandom {
        #[arg(long)]
        config: PathBuf,
        /// Total evaluation budget for each design.
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long = "set")]
        sets: Vec<String>,
        /// Maximum number of threads for model evaluations.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Export the triangulation of a results directory as JSON.
    ExportMesh {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_metric(name: &str) -> Result<MetricKind, CliError> {
    match name {
        "grassmann" => Ok(MetricKind::Grassmann),
        "chordal" => Ok(MetricKind::Chordal),
        "procrustes" => Ok(MetricKind::Procrustes),
        _ => Err(CliError::Config(format!("unknown metric {name:?}"))),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            output,
            sets,
            jobs,
        } => {
            let run_config = config::load_config(&config, &sets)?;
            let dir = output::resolve_output_dir(output.as_deref(), &run_config)?;
            let result = run::cmd_run(&run_config, &dir, jobs)?;
            let status = match result.termination {
                TerminationReason::Converged => "converged",
                TerminationReason::BudgetExhausted => "budget exhausted",
                TerminationReason::MaxLevels => "level cap reached",
            };
            println!(
                "{status}: {} evaluations, {} points, {} elements -> {}",
                result.evaluations,
                result.mesh.points().len(),
                result.mesh.simplices().len(),
                dir.display()
            );
            Ok(())
        }
        Command::Distance {
            file_a,
            file_b,
            metric,
            all,
            rank,
        } => {
            let kind = parse_metric(&metric)?;
            let report = distance::cmd_distance(&file_a, &file_b, kind, all, rank)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Interpolate {
            results,
            xi,
            output,
            verify,
        } => {
            let loaded_dim = {
                let cfg = config::load_config(&results.join("config.json"), &[])?;
                cfg.model.dim()
            };
            let point = output::parse_point(&xi, loaded_dim)?;
            let out = interpolate::cmd_interpolate(&results, &point, output.as_deref(), verify)?;
            println!(
                "interpolated inside element {:?}",
                out.element_vertices
            );
            if let Some((theta, frob)) = out.verification {
                println!("angle error: {theta:.6}");
                println!("frobenius error: {frob:.6}");
            }
            Ok(())
        }
        Command::CompareRandom {
            config,
            budget,
            output,
            sets,
            jobs,
        } => {
            let run_config = config::load_config(&config, &sets)?;
            let dir = output::resolve_output_dir(output.as_deref(), &run_config)?;
            let report = compare::cmd_compare_random(&run_config, budget, &dir, jobs)?;
            println!(
                "adaptive: mean theta {:.6}, mean frobenius {:.6} ({} elements)",
                report.adaptive.mean_theta, report.adaptive.mean_frobenius, report.adaptive.elements
            );
            println!(
                "random:   mean theta {:.6}, mean frobenius {:.6} ({} elements)",
                report.random.mean_theta, report.random.mean_frobenius, report.random.elements
            );
            Ok(())
        }
        Command::ExportMesh { results, output } => {
            let export = export::cmd_export_mesh(&results, &output)?;
            println!(
                "exported {} points and {} simplices -> {}",
                export.points.len(),
                export.simplices.len(),
                output.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
