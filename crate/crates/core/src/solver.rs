//! Time integrators for the deterministic, skeleton, stochastic,
//! stochastic-controlled and short-time rescaled systems, each carrying an
//! energy ledger.
//!
//! One step of the default scheme reads
//!
//! ```text
//! u*      = u_n + dt·[s(−B(u_n) − βC(u_n)) + f_n + Φ(u_n)h_n] + σ·Φ(u_n)ΔW_n
//! u_{n+1} = e^{−sμA dt} u*
//! ```
//!
//! with drift scale `s` and noise amplitude `σ` set by [`Dynamics`]. The
//! viscous ledger term of a step is the exact dissipation along the
//! integrating-factor subflow, `Σ_k (2π)²|u*_k|²(1 − e^{−2sμ|k|²dt})`, and the
//! remaining terms use the left endpoint, so the per-step residual equals
//! `‖dt·N_n + σΦΔW_n‖² − σ²‖Φ‖²_{L_Q}dt` exactly.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{ControlPath, CovarianceSpec, NoiseError, NoiseMap};
use crate::spectral::{
    abs_pow, back_to_field, physical_gradient, physical_values, OperatorParams, SpectralError, SpectralField,
    Workspace, TORUS_AREA,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("blow-up at t = {time}: |u|_H = {h_norm} exceeds guard {guard} (reduce dt)")]
    BlowUp { time: f64, h_norm: f64, guard: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact mode-wise viscous integrating factor, `B` and `C` explicit.
    #[default]
    SemiImplicitEuler,
    /// Fully explicit drift divided by `1 + dt‖drift‖_H`.
    TamedEuler,
}

/// Which system a run integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    /// `du = −[μAu + B + βC]dt + f dt + Φh dt + √ε Φ dW`.
    Regular,
    /// `dũ = −ε²[μAũ + B + βC]dt + εΦ dW̃`.
    ShortTime,
}

impl Dynamics {
    /// `(drift scale s, noise amplitude σ)` for noise level `ε`.
    pub fn scales(self, epsilon: f64) -> (f64, f64) {
        match self {
            Dynamics::Regular => (1.0, epsilon.sqrt()),
            Dynamics::ShortTime => (epsilon * epsilon, epsilon),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Noise scale `ε ≥ 0`.
    pub epsilon: f64,
    pub params: OperatorParams,
    pub noise: NoiseMap,
    pub covariance: CovarianceSpec,
    /// Drop `B` and `C` (linear Stokes–OU test system).
    pub linear_only: bool,
    /// Keep a snapshot every this many steps; 0 keeps only the endpoints.
    pub save_every: usize,
    /// Radii whose first crossing times are reported.
    pub thresholds: Vec<f64>,
    /// Blow-up guard `factor·(1 + ‖u0‖_H)`.
    pub blowup_factor: f64,
    /// Constant `c` of the explicit-step guard
    /// `dt·(‖u‖_∞N + β‖u‖_∞^{r−1}) ≤ c`; `None` disables it.
    pub cfl: Option<f64>,
}

impl SolverConfig {
    pub fn new(params: OperatorParams, covariance: CovarianceSpec, noise: NoiseMap, dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            scheme: Scheme::SemiImplicitEuler,
            epsilon: 0.0,
            params,
            noise,
            covariance,
            linear_only: false,
            save_every: 0,
            thresholds: Vec::new(),
            blowup_factor: 1e3,
            cfl: Some(1.0),
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Number of steps `T/dt`; errors unless it is an integer.
    pub fn steps(&self) -> Result<usize, SolverError> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || !self.dt.is_finite() || !self.horizon.is_finite() {
            return Err(SolverError::Config(format!(
                "dt and horizon_T must be positive, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon || n < 1.0 {
            return Err(SolverError::Config(format!(
                "horizon_T / dt must be an integer, got {} / {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<usize, SolverError> {
        self.params.validate()?;
        self.noise.check(&self.covariance)?;
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(SolverError::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.thresholds.iter().any(|&r| !(r > 0.0)) {
            return Err(SolverError::Config("exit thresholds must be positive".into()));
        }
        self.steps()
    }

    /// `ε₀ = μλ₁/(13K)` with `λ₁ = 1`.
    pub fn epsilon_zero(&self) -> f64 {
        let k = self.noise.growth_constant(&self.covariance);
        if k == 0.0 {
            f64::INFINITY
        } else {
            self.params.mu / (13.0 * k)
        }
    }
}

/// Deterministic forcing `f`.
#[derive(Clone, Debug, Default)]
pub enum Forcing {
    #[default]
    None,
    Steady(SpectralField),
    /// One field per left endpoint.
    Nodes(Vec<SpectralField>),
}

impl Forcing {
    fn at(&self, n: usize) -> Option<&SpectralField> {
        match self {
            Forcing::None => None,
            Forcing::Steady(f) => Some(f),
            Forcing::Nodes(v) => v.get(n),
        }
    }
}

/// Ledger contributions of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub viscous: f64,
    pub damping: f64,
    pub forcing: f64,
    pub control: f64,
    pub ito: f64,
    pub stochastic: f64,
    pub drift_defect: f64,
    /// `‖u_n‖_{r+1}^{r+1}` at the left endpoint (0 in linear mode).
    pub lr_pow: f64,
    pub cfl_exceeded: bool,
}

/// Cumulative energy ledger at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub t: f64,
    pub h_norm_sq: f64,
    pub v_norm_sq: f64,
    /// `‖u‖_{r+1}^{r+1}` (0 in linear mode).
    pub lr_pow: f64,
    /// `2sμ∫‖u‖_V²`.
    pub viscous: f64,
    /// `2sβ∫‖u‖_{r+1}^{r+1}`.
    pub damping: f64,
    /// `2∫⟨f,u⟩`.
    pub forcing: f64,
    /// `2∫(Φh, u)`.
    pub control: f64,
    /// `σ²∫‖Φ‖²_{L_Q}`.
    pub ito: f64,
    /// `2σ∫(Φ dW, u)`.
    pub stochastic: f64,
    /// `Σ‖dt·N_n‖²`, the deterministic part of the residual.
    pub drift_defect: f64,
    pub residual: f64,
}

/// Time series produced by an integrator.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub ledger: Vec<LedgerEntry>,
    pub snapshots: Vec<(f64, SpectralField)>,
    pub thresholds: Vec<f64>,
    pub exit_times: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpectralField {
        &self.snapshots.last().expect("trajectory has snapshots").1
    }

    pub fn initial_state(&self) -> &SpectralField {
        &self.snapshots[0].1
    }

    pub fn residual(&self) -> f64 {
        self.ledger.last().map(|e| e.residual).unwrap_or(0.0)
    }

    pub fn sup_h_norm(&self) -> f64 {
        self.ledger.iter().map(|e| e.h_norm_sq).fold(0.0, f64::max).sqrt()
    }

    /// `sup‖u‖² + μ∫‖u‖_V² + β∫‖u‖_{r+1}^{r+1}` in drift-scale units, the
    /// left side of the a-priori bounds.
    pub fn energy_functional(&self) -> f64 {
        let last = self.ledger.last().copied().unwrap_or_default();
        self.ledger.iter().map(|e| e.h_norm_sq).fold(0.0, f64::max) + 0.5 * (last.viscous + last.damping)
    }

    /// Columnar export `t,h_norm_sq,v_norm_sq,lr_pow,residual,exited_<i>…`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t,h_norm_sq,v_norm_sq,lr_pow,residual")?;
        for i in 0..self.thresholds.len() {
            write!(out, ",exited_{i}")?;
        }
        writeln!(out)?;
        for e in &self.ledger {
            write!(
                out,
                "{:?},{:?},{:?},{:?},{:?}",
                e.t, e.h_norm_sq, e.v_norm_sq, e.lr_pow, e.residual
            )?;
            for x in &self.exit_times {
                let flag = matches!(x, Some(t) if *t <= e.t);
                write!(out, ",{}", u8::from(flag))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// First node time at which `‖u‖_H > R`, if any.
pub fn exit_time(traj: &Trajectory, radius: f64) -> Option<f64> {
    let r2 = radius * radius;
    traj.ledger.iter().find(|e| e.h_norm_sq > r2).map(|e| e.t)
}

/// Reusable single-step integrator. Owns its transform workspace, so one
/// stepper per thread.
pub struct Stepper {
    cfg: SolverConfig,
    ws: Workspace,
    drift_scale: f64,
    noise_amp: f64,
    decay: Vec<f64>,
    loss: Vec<f64>,
    modal_u: Vec<f64>,
    modal_w: Vec<f64>,
    phys: Vec<Complex64>,
    sup_norm: f64,
}

impl Stepper {
    pub fn new(cfg: &SolverConfig, dynamics: Dynamics) -> Result<Self, SolverError> {
        cfg.validate()?;
        let grid = cfg.covariance.grid().clone();
        if !cfg.linear_only {
            grid.require_alias_free(1.5)?;
            if cfg.params.odd_integer_exponent().is_some() {
                grid.require_alias_free(cfg.params.damping_padding())?;
            }
        }
        let (s, sigma) = dynamics.scales(cfg.epsilon);
        let rate = s * cfg.params.mu * cfg.dt;
        let decay = grid.ksq().iter().map(|&q| (-rate * q).exp()).collect();
        let loss = grid
            .ksq()
            .iter()
            .map(|&q| TORUS_AREA * -(-2.0 * rate * q).exp_m1())
            .collect();
        Ok(Self {
            ws: Workspace::new(&grid),
            drift_scale: s,
            noise_amp: sigma,
            decay,
            loss,
            modal_u: vec![0.0; grid.modal_len()],
            modal_w: vec![0.0; grid.modal_len()],
            phys: Vec::new(),
            sup_norm: 0.0,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn drift_scale(&self) -> f64 {
        self.drift_scale
    }

    pub fn noise_amplitude(&self) -> f64 {
        self.noise_amp
    }

    /// `s(−B(u) − βC(u))` and `‖u‖_{r+1}^{r+1}`; also refreshes `‖u‖_∞`.
    pub fn nonlinear_drift(&mut self, u: &SpectralField) -> (SpectralField, f64) {
        let beta = self.cfg.params.beta;
        let r = self.cfg.params.r;
        let pu = physical_values(&mut self.ws, u);
        let [gx, gy] = physical_gradient(&mut self.ws, u);
        let mut lr = 0.0;
        let mut sup = 0.0f64;
        let s = self.drift_scale;
        self.phys.clear();
        self.phys.extend(pu.iter().zip(gx.iter().zip(&gy)).map(|(p, (a, b))| {
            let sq = p.norm_sqr();
            sup = sup.max(sq);
            lr += abs_pow(sq, r + 1.0);
            let adv = *a * p.re + *b * p.im;
            (adv + *p * (beta * abs_pow(sq, r - 1.0))) * (-s)
        }));
        self.sup_norm = sup.sqrt();
        let mut phys = std::mem::take(&mut self.phys);
        let field = back_to_field(&mut self.ws, &mut phys);
        self.phys = phys;
        (field, lr * self.ws.cell_area())
    }

    /// Advances `u` by one step. `control` is the modal `h_n`, `increment`
    /// the modal `ΔW_n`.
    pub fn step(
        &mut self,
        u: &mut SpectralField,
        forcing: Option<&SpectralField>,
        control: Option<&[f64]>,
        increment: Option<&[f64]>,
    ) -> StepRecord {
        let dt = self.cfg.dt;
        let mut rec = StepRecord::default();
        let hsq = u.h_norm_sq();
        let v_left = u.v_norm_sq();

        let mut drift = if self.cfg.linear_only {
            SpectralField::zeros(u.grid())
        } else {
            let (n, lr) = self.nonlinear_drift(u);
            rec.lr_pow = lr;
            rec.damping = 2.0 * self.drift_scale * self.cfg.params.beta * dt * lr;
            if let Some(c) = self.cfg.cfl {
                let p = &self.cfg.params;
                let umax = self.sup_norm;
                let rate =
                    self.drift_scale * (umax * u.grid().modes() as f64 + p.beta * abs_pow(umax * umax, p.r - 1.0));
                rec.cfl_exceeded = dt * rate > c;
            }
            n
        };
        if let Some(f) = forcing {
            rec.forcing = 2.0 * dt * f.inner(u);
            drift.axpy(1.0, f);
        }

        let phi = &self.cfg.noise;
        let factor = phi.factor_of(hsq);
        let noisy = increment.is_some() && self.noise_amp > 0.0;
        if control.is_some() || noisy {
            u.write_modal(&mut self.modal_u);
        }
        if let Some(h) = control {
            phi.apply_modal(factor, h, &mut self.modal_w);
            let dot: f64 = self.modal_w.iter().zip(&self.modal_u).map(|(a, b)| a * b).sum();
            rec.control = 2.0 * dt * dot;
            drift.add_modal(1.0, &self.modal_w);
        }
        rec.drift_defect = dt * dt * drift.h_norm_sq();

        match self.cfg.scheme {
            Scheme::SemiImplicitEuler => {
                u.axpy(dt, &drift);
                if noisy {
                    self.add_noise(u, factor, increment.unwrap(), &mut rec);
                }
                let mut visc = 0.0;
                for ((c, &e), &l) in u.coeffs_mut().iter_mut().zip(&self.decay).zip(&self.loss) {
                    visc += l * (c[0].norm_sqr() + c[1].norm_sqr());
                    c[0] *= e;
                    c[1] *= e;
                }
                rec.viscous = visc;
            }
            Scheme::TamedEuler => {
                let s_mu = self.drift_scale * self.cfg.params.mu;
                rec.viscous = 2.0 * s_mu * dt * v_left;
                let full = u.map_modes(|q| -s_mu * q);
                drift.axpy(1.0, &full);
                let tame = 1.0 / (1.0 + dt * drift.h_norm());
                // Rebuild the ledger for the tamed drift: every drift term is
                // scaled by the same factor.
                rec.damping *= tame;
                rec.forcing *= tame;
                rec.control *= tame;
                rec.viscous *= tame;
                rec.drift_defect = dt * dt * tame * tame * drift.h_norm_sq();
                u.axpy(dt * tame, &drift);
                if noisy {
                    self.add_noise(u, factor, increment.unwrap(), &mut rec);
                }
            }
        }
        rec
    }

    fn add_noise(&mut self, u: &mut SpectralField, factor: f64, dw: &[f64], rec: &mut StepRecord) {
        let sigma = self.noise_amp;
        let phi = &self.cfg.noise;
        phi.apply_modal(factor, dw, &mut self.modal_w);
        let dot: f64 = self.modal_w.iter().zip(&self.modal_u).map(|(a, b)| a * b).sum();
        rec.stochastic = 2.0 * sigma * dot;
        let hs = factor * factor * phi.diag_hs_sq(&self.cfg.covariance);
        rec.ito = sigma * sigma * hs * self.cfg.dt;
        u.add_modal(sigma, &self.modal_w);
    }
}

/// Per-node callback used by ensemble drivers: `(step index, time, state)`.
pub type Observer<'a> = &'a mut dyn FnMut(usize, f64, &SpectralField);

/// Generic driver shared by every integrator.
#[allow(clippy::too_many_arguments)]
pub fn run_path<R: Rng + ?Sized>(
    u0: &SpectralField,
    cfg: &SolverConfig,
    dynamics: Dynamics,
    forcing: &Forcing,
    control: Option<&ControlPath>,
    rng: Option<&mut R>,
    record: bool,
    observer: Option<Observer<'_>>,
) -> Result<Trajectory, SolverError> {
    let steps = cfg.validate()?;
    if !u0.grid().same_as(cfg.covariance.grid()) {
        return Err(SpectralError::GridMismatch.into());
    }
    if let Some(h) = control {
        if h.steps() != steps || (h.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(SolverError::Config(format!(
                "control path has {} steps of {}, solver expects {} of {}",
                h.steps(),
                h.dt(),
                steps,
                cfg.dt
            )));
        }
    }
    let mut stepper = Stepper::new(cfg, dynamics)?;
    let mut rng = rng;
    let mut dw = vec![0.0; u0.grid().modal_len()];
    let draw_noise = rng.is_some() && stepper.noise_amplitude() > 0.0;

    let mut u = u0.clone();
    let e0 = u.h_norm_sq();
    let guard = cfg.blowup_factor * (1.0 + e0.sqrt());
    let mut traj = Trajectory {
        dt: cfg.dt,
        ledger: Vec::with_capacity(if record { steps + 1 } else { 0 }),
        snapshots: vec![(0.0, u.clone())],
        thresholds: cfg.thresholds.clone(),
        exit_times: vec![None; cfg.thresholds.len()],
        warnings: Vec::new(),
    };
    let mut acc = LedgerEntry {
        h_norm_sq: e0,
        v_norm_sq: u.v_norm_sq(),
        ..Default::default()
    };
    let mark_exits = |traj: &mut Trajectory, t: f64, hsq: f64| {
        for (slot, &r) in traj.exit_times.iter_mut().zip(&traj.thresholds) {
            if slot.is_none() && hsq > r * r {
                *slot = Some(t);
            }
        }
    };
    mark_exits(&mut traj, 0.0, e0);
    let mut observer = observer;
    if let Some(obs) = observer.as_mut() {
        obs(0, 0.0, &u);
    }
    let mut cfl_warned = false;

    for n in 0..steps {
        let t_next = (n + 1) as f64 * cfg.dt;
        let inc = if draw_noise {
            cfg.covariance
                .sample_modal(cfg.dt, rng.as_deref_mut().unwrap(), &mut dw);
            Some(&dw[..])
        } else {
            None
        };
        let rec = stepper.step(&mut u, forcing.at(n), control.map(|h| h.value(n)), inc);
        if rec.cfl_exceeded && !cfl_warned {
            cfl_warned = true;
            traj.warnings.push(format!(
                "explicit-step guard exceeded at t = {:.6}; consider a smaller dt or the tamed scheme",
                n as f64 * cfg.dt
            ));
        }
        let hsq = u.h_norm_sq();
        if !hsq.is_finite() || hsq.sqrt() > guard {
            return Err(SolverError::BlowUp {
                time: t_next,
                h_norm: hsq.sqrt(),
                guard,
            });
        }
        mark_exits(&mut traj, t_next, hsq);
        if record {
            if n == 0 {
                acc.lr_pow = rec.lr_pow;
                traj.ledger.push(finish(acc, e0));
            } else if let Some(last) = traj.ledger.last_mut() {
                last.lr_pow = rec.lr_pow;
            }
            acc.t = t_next;
            acc.h_norm_sq = hsq;
            acc.v_norm_sq = u.v_norm_sq();
            acc.lr_pow = 0.0;
            acc.viscous += rec.viscous;
            acc.damping += rec.damping;
            acc.forcing += rec.forcing;
            acc.control += rec.control;
            acc.ito += rec.ito;
            acc.stochastic += rec.stochastic;
            acc.drift_defect += rec.drift_defect;
            traj.ledger.push(finish(acc, e0));
        }
        if cfg.save_every > 0 && (n + 1) % cfg.save_every == 0 && n + 1 < steps {
            traj.snapshots.push((t_next, u.clone()));
        }
        if let Some(obs) = observer.as_mut() {
            obs(n + 1, t_next, &u);
        }
    }
    if record && !cfg.linear_only {
        if let Some(last) = traj.ledger.last_mut() {
            last.lr_pow = crate::spectral::lp_norm(&u, cfg.params.r + 1.0).powf(cfg.params.r + 1.0);
        }
    }
    traj.snapshots.push((steps as f64 * cfg.dt, u));
    Ok(traj)
}

fn finish(mut e: LedgerEntry, e0: f64) -> LedgerEntry {
    e.residual = e.h_norm_sq + e.viscous + e.damping - e0 - e.forcing - e.control - e.ito - e.stochastic;
    e
}

fn require_deterministic(cfg: &SolverConfig) -> Result<(), SolverError> {
    if cfg.epsilon != 0.0 {
        return Err(SolverError::Config(format!(
            "deterministic integrators need epsilon = 0, got {}",
            cfg.epsilon
        )));
    }
    Ok(())
}

type NoRng = rand_chacha::ChaCha8Rng;

/// `du/dt + μAu + B(u) + βC(u) = f`.
pub fn integrate_deterministic(
    u0: &SpectralField,
    forcing: &Forcing,
    cfg: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    require_deterministic(cfg)?;
    run_path::<NoRng>(u0, cfg, Dynamics::Regular, forcing, None, None, true, None)
}

/// Skeleton system `du/dt = −[μAu + B(u) + βC(u)] + Φ(u)h`. With `budget`
/// set, the control must lie in `S_M`.
pub fn integrate_skeleton(
    u0: &SpectralField,
    h: &ControlPath,
    cfg: &SolverConfig,
    budget: Option<f64>,
) -> Result<Trajectory, SolverError> {
    require_deterministic(cfg)?;
    if let Some(m) = budget {
        h.check_budget(&cfg.covariance, m)?;
    }
    run_path::<NoRng>(u0, cfg, Dynamics::Regular, &Forcing::None, Some(h), None, true, None)
}

/// Small-noise system with `√ε Φ(u) dW`.
pub fn integrate_stochastic<R: Rng + ?Sized>(
    u0: &SpectralField,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Trajectory, SolverError> {
    run_path(u0, cfg, Dynamics::Regular, &Forcing::None, None, Some(rng), true, None)
}

/// Stochastic controlled system: skeleton drift plus `√ε Φ(u) dW`.
pub fn integrate_stochastic_controlled<R: Rng + ?Sized>(
    u0: &SpectralField,
    h: &ControlPath,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Trajectory, SolverError> {
    let mut traj = run_path(
        u0,
        cfg,
        Dynamics::Regular,
        &Forcing::None,
        Some(h),
        Some(rng),
        true,
        None,
    )?;
    let e0 = cfg.epsilon_zero();
    if cfg.epsilon > e0 {
        traj.warnings
            .push(format!("epsilon = {} exceeds epsilon_0 = mu/(13K) = {e0}", cfg.epsilon));
    }
    Ok(traj)
}

/// Short-time rescaled system `dũ = −ε²[μAũ + B + βC]dt + εΦ dW̃`.
pub fn integrate_short_time<R: Rng + ?Sized>(
    u0: &SpectralField,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Trajectory, SolverError> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0) {
        return Err(SolverError::Config(format!(
            "short-time system needs epsilon in (0, 1], got {}",
            cfg.epsilon
        )));
    }
    run_path(
        u0,
        cfg,
        Dynamics::ShortTime,
        &Forcing::None,
        None,
        Some(rng),
        true,
        None,
    )
}

/// Right side of the skeleton a-priori bound: `(‖u0‖² + KM)e^{2(T+M)}`.
pub fn skeleton_bound(u0: &SpectralField, cfg: &SolverConfig, budget: f64) -> f64 {
    let k = cfg.noise.growth_constant(&cfg.covariance);
    (u0.h_norm_sq() + k * budget) * (2.0 * (cfg.horizon + budget)).exp()
}

/// Right side of the stochastic-controlled bound:
/// `(2‖u0‖² + 2K(4M + 13Kε₀)T)e^{8MKT}`.
pub fn stochastic_controlled_bound(u0: &SpectralField, cfg: &SolverConfig, budget: f64) -> f64 {
    let k = cfg.noise.growth_constant(&cfg.covariance);
    let t = cfg.horizon;
    let eps0 = cfg.epsilon_zero();
    (2.0 * u0.h_norm_sq() + 2.0 * k * (4.0 * budget + 13.0 * k * eps0) * t) * (8.0 * budget * k * t).exp()
}
