//! Trace-class covariances, Q-Wiener increments, Cameron–Martin norms and
//! the built-in noise coefficients `Φ`.
//!
//! Everything here is diagonal in the real orthonormal Stokes basis of
//! [`SpectralField::from_modal`], so `Q^{±1/2}` and `Φ` act mode by mode.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{SpectralField, TorusGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("control energy {energy} exceeds the budget {budget}")]
    ActionBudgetExceeded { energy: f64, budget: f64 },
    #[error("control path parse error: {0}")]
    Parse(String),
}

/// Per-trajectory random stream: ChaCha8 keyed by the master seed, with the
/// trajectory index as stream id. Independent of scheduling order.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Diagonal covariance `Q` with eigenvalue `μ_j` on real Stokes mode `j`.
/// A zero eigenvalue means the mode carries no noise and lies outside the
/// Cameron–Martin space.
#[derive(Clone, Debug)]
pub struct CovarianceSpec {
    grid: TorusGrid,
    eigenvalues: Vec<f64>,
    epsilon_q: Option<f64>,
}

impl CovarianceSpec {
    /// `Q = A^{−ε_Q}`, i.e. `μ_j = |k|^{−2ε_Q}`. The admissibility condition
    /// `ε_Q > 1 + 2α` (space dimension 2) is checked against `alpha`.
    pub fn power_law(grid: &TorusGrid, epsilon_q: f64, alpha: f64) -> Result<Self, NoiseError> {
        if !epsilon_q.is_finite() || !alpha.is_finite() {
            return Err(NoiseError::Config("epsilon_q and alpha must be finite".into()));
        }
        if epsilon_q <= 1.0 + 2.0 * alpha {
            return Err(NoiseError::Config(format!(
                "covariance exponent epsilon_q = {epsilon_q} must exceed 1 + 2*alpha = {}",
                1.0 + 2.0 * alpha
            )));
        }
        let eigenvalues = grid.modal_eigenvalues().iter().map(|&q| q.powf(-epsilon_q)).collect();
        Ok(Self {
            grid: grid.clone(),
            eigenvalues,
            epsilon_q: Some(epsilon_q),
        })
    }

    /// Explicit modal eigenvalues. Zeros are allowed (mode not driven);
    /// negative or non-finite entries are rejected.
    pub fn from_eigenvalues(grid: &TorusGrid, eigenvalues: Vec<f64>) -> Result<Self, NoiseError> {
        if eigenvalues.len() != grid.modal_len() {
            return Err(NoiseError::Config(format!(
                "expected {} covariance eigenvalues, got {}",
                grid.modal_len(),
                eigenvalues.len()
            )));
        }
        if eigenvalues.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(NoiseError::Config(
                "covariance eigenvalues must be finite and >= 0".into(),
            ));
        }
        if eigenvalues.iter().all(|&m| m == 0.0) {
            return Err(NoiseError::Config("covariance has no retained mode".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            eigenvalues,
            epsilon_q: None,
        })
    }

    /// Noise on a single real mode with eigenvalue `mu`.
    pub fn single_mode(grid: &TorusGrid, mode: usize, mu: f64) -> Result<Self, NoiseError> {
        let mut ev = vec![0.0; grid.modal_len()];
        if mode >= ev.len() {
            return Err(NoiseError::Config(format!("mode {mode} outside the truncation")));
        }
        ev[mode] = mu;
        Self::from_eigenvalues(grid, ev)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn epsilon_q(&self) -> Option<f64> {
        self.epsilon_q
    }

    /// `Tr Q = Σ_j μ_j`.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Modal coordinates of `ΔW`, each `N(0, μ_j dt)`.
    pub fn sample_modal<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        for (o, &m) in out.iter_mut().zip(&self.eigenvalues) {
            let z: f64 = rng.sample(StandardNormal);
            *o = if m > 0.0 { (m * dt).sqrt() * z } else { 0.0 };
        }
    }

    /// Q-Wiener increment over a step of length `dt`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> SpectralField {
        let mut modal = vec![0.0; self.eigenvalues.len()];
        self.sample_modal(dt, rng, &mut modal);
        SpectralField::from_modal(&self.grid, &modal)
    }

    /// `Σ_j h_j²/μ_j`; infinite if `h` charges a mode with `μ_j = 0`.
    pub fn cameron_martin_modal_sq(&self, h: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&x, &m) in h.iter().zip(&self.eigenvalues) {
            if x == 0.0 {
                continue;
            }
            if m == 0.0 {
                return f64::INFINITY;
            }
            s += x * x / m;
        }
        s
    }

    /// `‖h‖_0² = ‖Q^{−1/2}h‖_H²`.
    pub fn cameron_martin_norm_sq(&self, h: &SpectralField) -> f64 {
        self.cameron_martin_modal_sq(&h.to_modal())
    }
}

/// Family of the noise coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseKind {
    /// `Φ = D`, state independent.
    Additive,
    /// `Φ(u) = (σ₀ + σ₁ s(‖u‖_H)) D` with `s(x) = x²/(1+x²)`.
    LinearBounded { sigma0: f64, sigma1: f64 },
}

/// Noise coefficient `Φ(u) = a(u)·D` with `D` diagonal in the Stokes basis.
/// The built-in families are autonomous, so there is no time argument.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMap {
    kind: NoiseKind,
    diag: Vec<f64>,
}

/// Largest slope of `x ↦ x²/(1+x²)`, attained at `x = 1/√3`.
const SATURATION_LIP: f64 = 0.649_519_052_838_329; // 3√3/8

impl NoiseMap {
    pub fn additive(diag: Vec<f64>) -> Self {
        Self {
            kind: NoiseKind::Additive,
            diag,
        }
    }

    /// `Φ = I` on the truncation.
    pub fn identity(grid: &TorusGrid) -> Self {
        Self::additive(vec![1.0; grid.modal_len()])
    }

    pub fn linear_bounded(diag: Vec<f64>, sigma0: f64, sigma1: f64) -> Self {
        Self {
            kind: NoiseKind::LinearBounded { sigma0, sigma1 },
            diag,
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_additive(&self) -> bool {
        match self.kind {
            NoiseKind::Additive => true,
            NoiseKind::LinearBounded { sigma1, .. } => sigma1 == 0.0,
        }
    }

    pub fn check(&self, q: &CovarianceSpec) -> Result<(), NoiseError> {
        if self.diag.len() != q.eigenvalues().len() {
            return Err(NoiseError::Config(format!(
                "noise diagonal has {} entries, covariance {}",
                self.diag.len(),
                q.eigenvalues().len()
            )));
        }
        if self.diag.iter().any(|d| !d.is_finite()) {
            return Err(NoiseError::Config("noise diagonal must be finite".into()));
        }
        if let NoiseKind::LinearBounded { sigma0, sigma1 } = self.kind {
            if !sigma0.is_finite() || !sigma1.is_finite() {
                return Err(NoiseError::Config("sigma0 and sigma1 must be finite".into()));
            }
        }
        Ok(())
    }

    /// Scalar amplitude `a(u)` as a function of `‖u‖_H²`.
    pub fn factor_of(&self, h_norm_sq: f64) -> f64 {
        match self.kind {
            NoiseKind::Additive => 1.0,
            NoiseKind::LinearBounded { sigma0, sigma1 } => sigma0 + sigma1 * h_norm_sq / (1.0 + h_norm_sq),
        }
    }

    /// `d a / d(‖u‖_H²)`.
    pub fn factor_slope(&self, h_norm_sq: f64) -> f64 {
        match self.kind {
            NoiseKind::Additive => 0.0,
            NoiseKind::LinearBounded { sigma1, .. } => sigma1 / ((1.0 + h_norm_sq) * (1.0 + h_norm_sq)),
        }
    }

    pub fn factor(&self, u: &SpectralField) -> f64 {
        self.factor_of(u.h_norm_sq())
    }

    fn sup_factor(&self) -> f64 {
        match self.kind {
            NoiseKind::Additive => 1.0,
            NoiseKind::LinearBounded { sigma0, sigma1 } => sigma0.abs() + sigma1.abs(),
        }
    }

    /// `Σ_j d_j² μ_j`, the Hilbert–Schmidt norm of `D` in `L_Q`.
    pub fn diag_hs_sq(&self, q: &CovarianceSpec) -> f64 {
        self.diag.iter().zip(q.eigenvalues()).map(|(d, m)| d * d * m).sum()
    }

    /// `‖Φ(u)‖²_{L_Q} = Tr(Φ Q Φ*)`.
    pub fn hs_norm_sq(&self, u: &SpectralField, q: &CovarianceSpec) -> f64 {
        let a = self.factor(u);
        a * a * self.diag_hs_sq(q)
    }

    /// `‖Φ(u₁) − Φ(u₂)‖²_{L_Q}`.
    pub fn hs_distance_sq(&self, u1: &SpectralField, u2: &SpectralField, q: &CovarianceSpec) -> f64 {
        let da = self.factor(u1) - self.factor(u2);
        da * da * self.diag_hs_sq(q)
    }

    /// Growth constant `K` with `‖Φ(u)‖²_{L_Q} ≤ K(1 + ‖u‖_H²)`.
    pub fn growth_constant(&self, q: &CovarianceSpec) -> f64 {
        self.sup_factor().powi(2) * self.diag_hs_sq(q)
    }

    /// Lipschitz constant `L` with `‖Φ(u₁)−Φ(u₂)‖²_{L_Q} ≤ L‖u₁−u₂‖_H²`.
    pub fn lipschitz_constant(&self, q: &CovarianceSpec) -> f64 {
        match self.kind {
            NoiseKind::Additive => 0.0,
            NoiseKind::LinearBounded { sigma1, .. } => (sigma1 * SATURATION_LIP).powi(2) * self.diag_hs_sq(q),
        }
    }

    /// Constant `K̃` of the smoothed growth condition
    /// `‖A^{1/2}Φ(u)‖²_{L_Q} ≤ K̃(1 + ‖u‖_V²)`.
    pub fn smoothed_growth_constant(&self, q: &CovarianceSpec) -> f64 {
        let grid = q.grid();
        let s: f64 = self
            .diag
            .iter()
            .zip(q.eigenvalues())
            .enumerate()
            .map(|(j, (d, m))| grid.modal_eigenvalue(j) * d * d * m)
            .sum();
        self.sup_factor().powi(2) * s
    }

    /// `‖A^{1/2}Φ(u)‖²_{L_Q}`.
    pub fn smoothed_hs_norm_sq(&self, u: &SpectralField, q: &CovarianceSpec) -> f64 {
        let a = self.factor(u);
        let grid = q.grid();
        let s: f64 = self
            .diag
            .iter()
            .zip(q.eigenvalues())
            .enumerate()
            .map(|(j, (d, m))| grid.modal_eigenvalue(j) * d * d * m)
            .sum();
        a * a * s
    }

    /// `ρ_T = ∫₀ᵀ ‖Φ*Φ‖_op dt` for state-independent noise of overall
    /// amplitude `amplitude`: `T · amplitude² · max_j d_j²`.
    pub fn rho(&self, horizon: f64, amplitude: f64) -> f64 {
        let dmax = self.diag.iter().fold(0.0f64, |a, d| a.max(d * d));
        horizon * amplitude * amplitude * self.sup_factor().powi(2) * dmax
    }

    /// `Φ(u)g` in modal coordinates with a precomputed amplitude `a(u)`.
    pub fn apply_modal(&self, factor: f64, g: &[f64], out: &mut [f64]) {
        for ((o, &x), &d) in out.iter_mut().zip(g).zip(&self.diag) {
            *o = factor * d * x;
        }
    }

    /// `Φ(u)g`.
    pub fn apply(&self, u: &SpectralField, g: &SpectralField) -> SpectralField {
        let gm = g.to_modal();
        let mut out = vec![0.0; gm.len()];
        self.apply_modal(self.factor(u), &gm, &mut out);
        SpectralField::from_modal(g.grid(), &out)
    }
}

/// Piecewise-constant control `h(t)`, one modal vector per left endpoint of
/// the uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath {
    dt: f64,
    values: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn zeros(grid: &TorusGrid, steps: usize, dt: f64) -> Self {
        Self {
            dt,
            values: vec![vec![0.0; grid.modal_len()]; steps],
        }
    }

    pub fn constant(steps: usize, dt: f64, value: Vec<f64>) -> Self {
        Self {
            dt,
            values: vec![value; steps],
        }
    }

    pub fn from_values(dt: f64, values: Vec<Vec<f64>>) -> Result<Self, NoiseError> {
        if !(dt > 0.0) {
            return Err(NoiseError::Config("control time step must be positive".into()));
        }
        if let Some(first) = values.first() {
            if values.iter().any(|v| v.len() != first.len()) {
                return Err(NoiseError::Config("ragged control values".into()));
            }
        }
        Ok(Self { dt, values })
    }

    /// Builds the path and checks membership in `S_M`.
    pub fn in_budget(dt: f64, values: Vec<Vec<f64>>, q: &CovarianceSpec, budget: f64) -> Result<Self, NoiseError> {
        let path = Self::from_values(dt, values)?;
        path.check_budget(q, budget)?;
        Ok(path)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.values.len() as f64
    }

    pub fn value(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.values
    }

    pub fn field(&self, grid: &TorusGrid, n: usize) -> SpectralField {
        SpectralField::from_modal(grid, &self.values[n])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|&x| x == 0.0))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dt: self.dt,
            values: self.values.iter().map(|v| v.iter().map(|x| c * x).collect()).collect(),
        }
    }

    /// `∫₀ᵀ ‖h‖_0² dt`, left-endpoint rule.
    pub fn energy(&self, q: &CovarianceSpec) -> f64 {
        self.values.iter().map(|v| q.cameron_martin_modal_sq(v) * self.dt).sum()
    }

    /// `½ ∫₀ᵀ ‖h‖_0² dt`.
    pub fn action(&self, q: &CovarianceSpec) -> f64 {
        0.5 * self.energy(q)
    }

    pub fn check_budget(&self, q: &CovarianceSpec, budget: f64) -> Result<(), NoiseError> {
        let energy = self.energy(q);
        if energy > budget {
            Err(NoiseError::ActionBudgetExceeded { energy, budget })
        } else {
            Ok(())
        }
    }

    /// Columnar table `time,mode_index,re,im`. Mode `j` of the table is the
    /// wavevector `half_plane()[j]`; `re − i·im` pairs the cosine and sine
    /// coordinates, so `re` is the cosine and `im` the negated sine
    /// coordinate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,mode_index,re,im")?;
        for (n, v) in self.values.iter().enumerate() {
            let t = n as f64 * self.dt;
            for j in 0..v.len() / 2 {
                writeln!(out, "{:?},{},{:?},{:?}", t, j, v[2 * j], -v[2 * j + 1])?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, dt: f64, modal_len: usize) -> Result<Self, NoiseError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| NoiseError::Parse(e.to_string()))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(NoiseError::Parse(format!("line {}: expected 4 columns", lineno + 1)));
            }
            let bad = |e: String| NoiseError::Parse(format!("line {}: {e}", lineno + 1));
            let t: f64 = parts[0]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let j: usize = parts[1]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let re: f64 = parts[2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let im: f64 = parts[3]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let n = (t / dt).round() as usize;
            if 2 * j + 1 >= modal_len {
                return Err(bad(format!("mode index {j} outside the truncation")));
            }
            while rows.len() <= n {
                rows.push(vec![0.0; modal_len]);
            }
            rows[n][2 * j] = re;
            rows[n][2 * j + 1] = -im;
        }
        Self::from_values(dt, rows)
    }
}
