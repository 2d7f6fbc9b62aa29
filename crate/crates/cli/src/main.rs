use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scbf_cli::{exit_code, load_config, load_manifest, run, CliError, ExperimentConfig, Study};

/// Stochastic convective Brinkman–Forchheimer toolkit: operator checks,
/// simulation, minimum-action rates and rare-event ensembles.
#[derive(Parser)]
#[command(name = "scbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: output.directory of the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; affects speed only.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Operator identity, monotonicity, noise and solver property suite.
    VerifyOps,
    /// Stochastic or deterministic trajectories with energy ledgers.
    Simulate,
    /// Controlled skeleton trajectory.
    Skeleton,
    /// Minimum-action optimisation.
    Action,
    /// Exit probabilities, tail-bound checks and scaling curves.
    RareEvent,
    /// Short-time scaling study.
    ShortTime,
    /// Re-runs a study from its manifest.
    Replay {
        /// `manifest.json` of an earlier run.
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let (study, mut cfg, base) = match cli.command {
        Command::Replay { manifest } => load_manifest(&manifest)?,
        cmd => {
            let study = match cmd {
                Command::VerifyOps => Study::VerifyOps,
                Command::Simulate => Study::Simulate,
                Command::Skeleton => Study::Skeleton,
                Command::Action => Study::Action,
                Command::RareEvent => Study::RareEvent,
                Command::ShortTime => Study::ShortTime,
                Command::Replay { .. } => unreachable!(),
            };
            let (cfg, base) = match &cli.config {
                Some(p) => load_config(p)?,
                None if study == Study::VerifyOps => (ExperimentConfig::default(), std::env::current_dir()?),
                None => return Err(CliError::Config(format!("{} needs --config", study.name()))),
            };
            (study, cfg, base)
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.unwrap_or_else(|| cfg.output.directory.clone());
    let finding = run(study, &cfg, &base, &out)?;
    println!("{}: {:?} -> {}", study.name(), finding, out.display());
    if finding != scbf_cli::Finding::Ok {
        eprintln!("finding: {finding:?} (exit {})", finding.exit_code());
    }
    Ok(if finding == scbf_cli::Finding::Ok {
        exit_code::OK
    } else {
        finding.exit_code()
    })
}
