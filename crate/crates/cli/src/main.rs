use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedacs_cli::{cmd_diagnose, cmd_partition, cmd_run, load_config, CliError, Overrides};

/// Seeded federated-learning experiments with attention-based client selection.
#[derive(Parser)]
#[command(name = "fedacs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for all outputs; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Comma-separated seeds; overrides `seeds` in the config.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate; writes per-round metrics and a summary.
    Run { config: PathBuf },
    /// Partition only; writes a per-client manifest.
    Partition { config: PathBuf },
    /// Stationarity trace and rate fit.
    Diagnose { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let overrides = Overrides {
        output_dir: cli.output_dir,
        seeds: cli.seeds,
    };
    match execute(cli.command, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command, overrides: &Overrides) -> Result<(), CliError> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config, overrides)?;
            let report = cmd_run(&cfg)?;
            for a in &report.summary.algorithms {
                log::info!(
                    "{}: final accuracy {:.4} ± {:.4} over {} seeds",
                    a.algorithm,
                    a.mean_final_accuracy,
                    a.std_final_accuracy,
                    a.seeds.len()
                );
            }
            log::info!("wrote {} files to {}", report.files.len(), cfg.output_dir.display());
        }
        Command::Partition { config } => {
            let cfg = load_config(&config, overrides)?;
            let files = cmd_partition(&cfg)?;
            log::info!("wrote {} manifests to {}", files.len(), cfg.output_dir.display());
        }
        Command::Diagnose { config } => {
            let cfg = load_config(&config, overrides)?;
            for r in cmd_diagnose(&cfg)? {
                match r.fit {
                    Some(fit) => log::info!("seed {}: slope {:.3} (residual {:.3})", r.seed, fit.slope, fit.residual),
                    None => log::info!("seed {}: not enough positive checkpoints for a fit", r.seed),
                }
            }
        }
    }
    Ok(())
}
