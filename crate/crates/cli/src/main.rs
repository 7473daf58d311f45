use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use tumor_ocp::runner::{self, error_exit_code, ExperimentConfig, RunOutcome};

#[derive(Parser, Debug)]
#[command(name = "tumor-ocp", version, about = "Sparse optimal control of a viscous Cahn-Hilliard tumor model")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML). The built-in baseline is used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Random seed; overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Forward solve for the zero control.
    Simulate,
    /// Run the proximal-gradient optimizer.
    Optimize,
    /// Optimize, then certify first- and second-order optimality.
    Certify,
    /// Derivative, continuity and convergence checks.
    Diagnostics,
    /// Manufactured-solution convergence study.
    Mms,
}

fn load(cli: &Cli) -> tumor_ocp::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> tumor_ocp::Result<RunOutcome> {
    match cmd {
        Command::Simulate => runner::run_simulate(cfg, out),
        Command::Optimize => runner::run_optimize(cfg, out),
        Command::Certify => runner::run_certify(cfg, out),
        Command::Diagnostics => runner::run_diagnostics(cfg, out),
        Command::Mms => runner::run_mms(cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = load(&cli).and_then(|cfg| {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        dispatch(cli.command, &cfg, &out)
    });
    match result {
        Ok(outcome) => {
            let code = outcome.status.exit_code();
            info!("wrote {} artifacts to {}", outcome.artifacts.len(), outcome.out_dir.display());
            println!(
                "{:?}: {} artifacts in {}",
                outcome.status,
                outcome.artifacts.len(),
                outcome.out_dir.display()
            );
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
