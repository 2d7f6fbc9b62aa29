//! TOML experiment configuration. Every block rejects unknown keys; keys
//! carry their symbol or unit (`horizon_T`, `epsilon_Q`, `budget_M`).

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scbf_core::noise::NoiseMap;
use scbf_core::solver::{Dynamics, Scheme, SolverConfig};
use scbf_core::spectral::{random_field_with_norm, read_field};
use scbf_core::{CovarianceSpec, OperatorParams, SpectralField, TorusGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed of every random stream of the study.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub initial: FieldSpec,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_ops: Option<VerifyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<SkeletonBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rare_event: Option<RareEventBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_time: Option<ShortTimeBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "modes_N")]
    pub modes: usize,
    /// Collocation oversampling factor.
    #[serde(default = "default_padding")]
    pub padding: f64,
}

fn default_padding() -> f64 {
    2.0
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { modes: 4, padding: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub mu: f64,
    pub beta: f64,
    pub r: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta: 1.0,
            r: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceConfig {
    /// `Q = A^{−ε_Q}`.
    PowerLaw {
        #[serde(rename = "epsilon_Q")]
        epsilon_q: f64,
        #[serde(default)]
        alpha: f64,
    },
    /// Explicit modal eigenvalues `μ_j`.
    Eigenvalues { values: Vec<f64> },
    /// Only the listed modal indices are driven, each with variance `mu_k`.
    Modes { indices: Vec<usize>, mu_k: f64 },
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        CovarianceConfig::PowerLaw {
            epsilon_q: 1.5,
            alpha: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Additive,
    LinearBounded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub covariance: CovarianceConfig,
    #[serde(default)]
    pub family: NoiseFamily,
    /// Modal diagonal of `Φ`; all ones when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub sigma0: f64,
    #[serde(default)]
    pub sigma1: f64,
    /// Noise level of single-level studies.
    #[serde(default)]
    pub epsilon: f64,
    /// Noise levels of scaling studies.
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceConfig::default(),
            family: NoiseFamily::Additive,
            diag: None,
            sigma0: 1.0,
            sigma1: 0.0,
            epsilon: 0.0,
            epsilons: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    /// Drop advection and damping.
    #[serde(default)]
    pub linear_only: bool,
    #[serde(default)]
    pub save_every: usize,
    #[serde(default = "default_blowup")]
    pub blowup_factor: f64,
    /// Explicit-step guard constant; omit to disable.
    #[serde(default = "default_cfl", skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
}

fn default_blowup() -> f64 {
    1e3
}

fn default_cfl() -> Option<f64> {
    Some(1.0)
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            scheme: Scheme::SemiImplicitEuler,
            dt: 1e-2,
            horizon: 1.0,
            linear_only: false,
            save_every: 0,
            blowup_factor: 1e3,
            cfl: Some(1.0),
        }
    }
}

/// A velocity field given by construction.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    /// Random divergence-free field with `‖u‖_H = h_norm`.
    Random {
        h_norm: f64,
        #[serde(default = "one")]
        decay: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Single modal coordinate.
    Mode { index: usize, amplitude: f64 },
    /// Sparse modal coordinates.
    Modal { indices: Vec<usize>, values: Vec<f64> },
    /// Snapshot file written by `write_field`; relative to the config file.
    File { path: PathBuf },
}

impl FieldSpec {
    pub fn build(&self, grid: &TorusGrid, base: &Path) -> Result<SpectralField, CliError> {
        let n = grid.modal_len();
        let check = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "modal index {i} out of range (modal length {n})"
                )))
            }
        };
        Ok(match self {
            FieldSpec::Zero => SpectralField::zeros(grid),
            FieldSpec::Random { h_norm, decay, seed } => {
                if !(*h_norm >= 0.0) {
                    return Err(CliError::Config("initial.h_norm must be >= 0".into()));
                }
                random_field_with_norm(grid, *decay, *h_norm, &mut ChaCha8Rng::seed_from_u64(*seed))
            }
            FieldSpec::Mode { index, amplitude } => {
                check(*index)?;
                let mut m = vec![0.0; n];
                m[*index] = *amplitude;
                SpectralField::from_modal(grid, &m)
            }
            FieldSpec::Modal { indices, values } => {
                if indices.len() != values.len() {
                    return Err(CliError::Config(
                        "modal field: indices and values differ in length".into(),
                    ));
                }
                let mut m = vec![0.0; n];
                for (&i, &v) in indices.iter().zip(values) {
                    check(i)?;
                    m[i] = v;
                }
                SpectralField::from_modal(grid, &m)
            }
            FieldSpec::File { path } => {
                let p = base.join(path);
                let f = std::fs::File::open(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let u = read_field(std::io::BufReader::new(f)).map_err(|e| CliError::Config(e.to_string()))?;
                if u.grid().modes() != grid.modes() {
                    return Err(CliError::Config(format!(
                        "{}: field has N = {}, grid has N = {}",
                        p.display(),
                        u.grid().modes(),
                        grid.modes()
                    )));
                }
                u.clone_onto(grid)
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when `--out` is not given.
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    /// Emit a gnuplot script next to scaling tables.
    #[serde(default)]
    pub plot_scripts: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("scbf-out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            plot_scripts: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Test fixture: `flip_forchheimer_sign` corrupts the damping checks.
    #[serde(default)]
    pub fault: scbf_core::verify::Fault,
}

fn default_samples() -> usize {
    1000
}

fn default_pairs() -> usize {
    10_000
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            samples: 1000,
            pairs: 10_000,
            fault: Default::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsChoice {
    #[default]
    Regular,
    ShortTime,
}

impl From<DynamicsChoice> for Dynamics {
    fn from(d: DynamicsChoice) -> Self {
        match d {
            DynamicsChoice::Regular => Dynamics::Regular,
            DynamicsChoice::ShortTime => Dynamics::ShortTime,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default = "one_usize")]
    pub paths: usize,
    #[serde(default)]
    pub dynamics: DynamicsChoice,
    /// Radii whose first crossing times are reported.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Paths whose full ledger is written (`trajectory_<i>.csv`).
    #[serde(default = "one_usize")]
    pub write_paths: usize,
}

fn one_usize() -> usize {
    1
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self {
            paths: 1,
            dynamics: DynamicsChoice::Regular,
            thresholds: Vec::new(),
            write_paths: 1,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    #[default]
    Zero,
    /// Time-constant control equal to the given field.
    Constant { field: FieldSpec },
    /// `time,mode_index,re,im` table; relative to the config file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonBlock {
    #[serde(default)]
    pub control: ControlSpec,
    /// Enforce membership in `S_M`.
    #[serde(default, rename = "budget_M", skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionDynamicsChoice {
    #[default]
    Skeleton,
    ShortTime,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `‖u(T) − g‖_H ≤ tolerance`.
    Terminal {
        state: FieldSpec,
        #[serde(default = "default_tol")]
        tolerance: f64,
    },
    /// Leave the ball of each radius; one optimisation per radius.
    ExitBall {
        radii: Vec<f64>,
        /// Relative to the radius.
        #[serde(default = "default_tol")]
        relative_tolerance: f64,
    },
}

fn default_tol() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBlock {
    #[serde(default)]
    pub dynamics: ActionDynamicsChoice,
    pub target: TargetSpec,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
}

/// Overrides of the optimiser defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_norm: Option<f64>,
}

impl OptimizerBlock {
    pub fn settings(&self, seed: u64) -> scbf_core::action::OptimizerSettings {
        let mut s = scbf_core::action::OptimizerSettings {
            seed,
            ..Default::default()
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { s.$f = v; })* };
        }
        set!(
            starts,
            max_iterations,
            outer_iterations,
            gradient_tolerance,
            initial_weight,
            initial_temperature,
            final_temperature,
            init_norm
        );
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceRate {
    /// `J(B_R^c)` from the action minimiser.
    #[default]
    Action,
    /// Closed-form per-mode rate of the linear system.
    Linear,
    None,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpBlock {
    pub radius: f64,
    #[serde(default)]
    pub reference: ReferenceRate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RareEventBlock {
    pub n_paths: usize,
    /// Strictly increasing exit radii.
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Compare with the exponential tail bounds (additive noise only).
    #[serde(default = "yes")]
    pub check_bounds: bool,
    /// Scaling study over `noise.epsilons`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldp: Option<LdpBlock>,
}

fn default_confidence() -> f64 {
    0.99
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortTimeBlock {
    pub n_paths: usize,
    pub target: FieldSpec,
    /// Radius of the terminal ball around the target.
    pub delta: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical echo: keys sorted at every level.
    pub fn canonical_json(&self) -> serde_json::Value {
        // serde_json's default map is ordered by key
        serde_json::to_value(self).expect("config serialises")
    }

    pub fn canonical_toml(&self) -> String {
        let v: toml::Value = toml::Value::try_from(self).expect("config serialises");
        toml::to_string_pretty(&v).expect("config serialises")
    }

    pub fn grid(&self) -> Result<TorusGrid, CliError> {
        Ok(TorusGrid::new(self.grid.modes, self.grid.padding)?)
    }

    pub fn params(&self) -> Result<OperatorParams, CliError> {
        let o = self.operator;
        Ok(OperatorParams::new(o.mu, o.beta, o.r)?)
    }

    pub fn covariance(&self, grid: &TorusGrid) -> Result<CovarianceSpec, CliError> {
        Ok(match &self.noise.covariance {
            CovarianceConfig::PowerLaw { epsilon_q, alpha } => CovarianceSpec::power_law(grid, *epsilon_q, *alpha)?,
            CovarianceConfig::Eigenvalues { values } => CovarianceSpec::from_eigenvalues(grid, values.clone())?,
            CovarianceConfig::Modes { indices, mu_k } => {
                let mut ev = vec![0.0; grid.modal_len()];
                for &i in indices {
                    if i >= ev.len() {
                        return Err(CliError::Config(format!("noise mode {i} out of range")));
                    }
                    ev[i] = *mu_k;
                }
                CovarianceSpec::from_eigenvalues(grid, ev)?
            }
        })
    }

    pub fn noise_map(&self, grid: &TorusGrid) -> Result<NoiseMap, CliError> {
        let diag = match &self.noise.diag {
            Some(d) if d.len() != grid.modal_len() => {
                return Err(CliError::Config(format!(
                    "noise.diag has {} entries, the grid has {} modes",
                    d.len(),
                    grid.modal_len()
                )))
            }
            Some(d) => d.clone(),
            None => vec![1.0; grid.modal_len()],
        };
        Ok(match self.noise.family {
            NoiseFamily::Additive => {
                if self.noise.sigma1 != 0.0 || self.noise.sigma0 != 1.0 {
                    return Err(CliError::Config(
                        "sigma0/sigma1 apply to the linear_bounded family only".into(),
                    ));
                }
                NoiseMap::additive(diag)
            }
            NoiseFamily::LinearBounded => NoiseMap::linear_bounded(diag, self.noise.sigma0, self.noise.sigma1),
        })
    }

    /// Solver configuration at `noise.epsilon`, fully validated.
    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let grid = self.grid()?;
        let q = self.covariance(&grid)?;
        let phi = self.noise_map(&grid)?;
        let s = &self.solver;
        let mut cfg = SolverConfig::new(self.params()?, q, phi, s.dt, s.horizon).with_epsilon(self.noise.epsilon);
        cfg.scheme = s.scheme;
        cfg.linear_only = s.linear_only;
        cfg.save_every = s.save_every;
        cfg.blowup_factor = s.blowup_factor;
        cfg.cfl = s.cfl;
        cfg.validate()?;
        if self.noise.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(CliError::Config("noise.epsilons must be positive".into()));
        }
        Ok(cfg)
    }
}
