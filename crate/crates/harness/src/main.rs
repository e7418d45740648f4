use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dgsam_harness::commands::{self, Context};
use dgsam_harness::{ExperimentConfig, HarnessError, Result};

#[derive(Parser, Debug)]
#[command(name = "dgsam", version, about = "Multi-domain sharpness-aware optimization experiments")]
struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output root; each command writes into its own subdirectory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Replace the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train every configured optimizer for every seed.
    Run,
    /// Domain-loss increments under total-gradient and sequential perturbation.
    PerturbTrace,
    /// Per-domain, mean, std, total and unseen sharpness.
    SharpnessTable,
    /// Wall-clock and gradient-evaluation cost per iteration.
    Cost,
    /// Loss grid on a two-dimensional slice.
    Landscape,
    /// Hessian eigenvalue density by stochastic Lanczos quadrature.
    Spectrum,
    /// Risk bound, ordering witness and convergence checks.
    VerifyTheory,
}

fn execute(cli: &Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(HarnessError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let out_root = cli.out.clone().or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context { config_dir: commands::config_dir_of(cli.config.as_deref()), out_root, config };
    match cli.command {
        Command::Run => commands::cmd_run(&ctx),
        Command::PerturbTrace => commands::cmd_perturb_trace(&ctx),
        Command::SharpnessTable => commands::cmd_sharpness_table(&ctx),
        Command::Cost => commands::cmd_cost(&ctx),
        Command::Landscape => commands::cmd_landscape(&ctx),
        Command::Spectrum => commands::cmd_spectrum(&ctx),
        Command::VerifyTheory => commands::cmd_verify_theory(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
