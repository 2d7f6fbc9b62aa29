//! Experiment harness: TOML configs in, CSV/JSON artifacts and a manifest
//! out. Each study is a function of the config alone, so a run can be
//! replayed bit-for-bit from its manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod output;
mod studies;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::ExperimentConfig;
pub use output::Artifacts;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Failed(String),
}

impl From<scbf_core::SpectralError> for CliError {
    fn from(e: scbf_core::SpectralError) -> Self {
        use scbf_core::SpectralError as E;
        match e {
            E::Config(_) | E::GridTooSmall { .. } | E::GridMismatch => CliError::Config(e.to_string()),
            E::Parse(_) => CliError::Failed(e.to_string()),
        }
    }
}

impl From<scbf_core::noise::NoiseError> for CliError {
    fn from(e: scbf_core::noise::NoiseError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<scbf_core::solver::SolverError> for CliError {
    fn from(e: scbf_core::solver::SolverError) -> Self {
        use scbf_core::solver::SolverError as E;
        match e {
            E::Spectral(s) => s.into(),
            E::Noise(n) => n.into(),
            E::Config(_) => CliError::Config(e.to_string()),
            E::BlowUp { .. } => CliError::Failed(e.to_string()),
        }
    }
}

impl From<scbf_core::rare_event::RareEventError> for CliError {
    fn from(e: scbf_core::rare_event::RareEventError) -> Self {
        use scbf_core::rare_event::RareEventError as E;
        match e {
            E::Solver(s) => s.into(),
            E::Config(m) => CliError::Config(m),
        }
    }
}

/// Scientific outcome of a completed study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    Ok,
    /// The action minimiser did not converge or found no feasible control.
    NotConverged,
    /// An empirical probability exceeded a tail bound.
    BoundViolated,
    /// The operator property suite reported failures.
    VerificationFailed,
}

/// Process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const VIOLATED: i32 = 4;
    pub const VERIFICATION: i32 = 5;
}

impl Finding {
    pub fn exit_code(self) -> i32 {
        match self {
            Finding::Ok => exit_code::OK,
            Finding::NotConverged => exit_code::NOT_CONVERGED,
            Finding::BoundViolated => exit_code::VIOLATED,
            Finding::VerificationFailed => exit_code::VERIFICATION,
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit_code::CONFIG,
            _ => exit_code::OTHER,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    VerifyOps,
    Simulate,
    Skeleton,
    Action,
    RareEvent,
    ShortTime,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::VerifyOps => "verify-ops",
            Study::Simulate => "simulate",
            Study::Skeleton => "skeleton",
            Study::Action => "action",
            Study::RareEvent => "rare-event",
            Study::ShortTime => "short-time",
        }
    }
}

/// Everything needed to replay a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub study: Study,
    pub seed: u64,
    /// Directory that relative file references in the config resolve against.
    pub base_dir: PathBuf,
    pub config: serde_json::Value,
    pub threads: usize,
    pub wall_time_s: f64,
    pub finding: Option<Finding>,
    pub outputs: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// Reads a config file; relative paths inside it resolve against its
/// directory.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = std::fs::canonicalize(&base).unwrap_or(base);
    Ok((cfg, base))
}

/// Reads a manifest and returns the config and base directory it recorded.
pub fn load_manifest(path: &Path) -> Result<(Study, ExperimentConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    let cfg: ExperimentConfig =
        serde_json::from_value(m.config).map_err(|e| CliError::Config(format!("manifest config: {e}")))?;
    Ok((m.study, cfg, m.base_dir))
}

/// Runs `study` and writes its artifacts and manifest into `out`.
pub fn run(study: Study, cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<Finding, CliError> {
    let start = Instant::now();
    let mut art = Artifacts::create(out)?;
    let finding = match study {
        Study::VerifyOps => studies::verify_ops(cfg, &mut art)?,
        Study::Simulate => studies::simulate(cfg, base, &mut art)?,
        Study::Skeleton => studies::skeleton(cfg, base, &mut art)?,
        Study::Action => studies::action(cfg, base, &mut art)?,
        Study::RareEvent => studies::rare_event(cfg, base, &mut art)?,
        Study::ShortTime => studies::short_time(cfg, base, &mut art)?,
    };
    art.text("config.toml", &cfg.canonical_toml())?;
    let manifest = Manifest {
        tool: "scbf".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        study,
        seed: cfg.seed,
        base_dir: base.to_path_buf(),
        config: cfg.canonical_json(),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        finding: Some(finding),
        outputs: art.files().to_vec(),
    };
    art.json(MANIFEST, &manifest)?;
    Ok(finding)
}
