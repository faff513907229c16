use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uavfl_cli::{cmd_fig3, cmd_fl, cmd_outage, cmd_validate, CliResult, ExperimentConfig, Outcome, Overrides};

#[derive(Parser)]
#[command(version, about = "UAV uplink outage and intermittent federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Replace the seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo trials per point.
    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Directory with MNIST IDX files; selects MNIST over the synthetic corpus.
    #[arg(long, global = true, env = "UAVFL_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Outage probability versus the UAV/AP density ratio.
    Outage,
    /// Final accuracy over the p_out, client-count and partition grid.
    Fl,
    /// Accuracy versus ratio: geometry-driven masks against the analytical lookup.
    Fig3,
    /// Oracle checks of the analytical model and the gradients.
    Validate,
}

fn run(cli: &Cli) -> CliResult<Outcome> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        trials: cli.trials,
        out: cli.out.clone(),
        data_dir: cli.data_dir.clone(),
    });
    let outcome = match cli.command {
        Command::Outage => cmd_outage(&cfg)?,
        Command::Fl => cmd_fl(&cfg)?,
        Command::Fig3 => cmd_fig3(&cfg)?,
        Command::Validate => cmd_validate(&cfg)?,
    };
    let path = outcome.write(&cfg)?;
    print!("{}", outcome.report.render());
    eprintln!("wrote {}", path.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => run(&cli),
    };
    match result {
        Ok(o) if o.failed == 0 => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("{} row(s) failed", o.failed);
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
