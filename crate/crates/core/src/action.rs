//! Freidlin–Wentzell action: evaluation, discrete adjoint gradients of the
//! penalised objective, and augmented-Lagrangian minimisation over controls.
//!
//! Controls are optimised in the whitened variable `y_n = √dt·Q^{−1/2}h_n`,
//! so the action is `½‖y‖²` and L-BFGS sees a mesh-independent metric.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::noise::{trajectory_rng, ControlPath, CovarianceSpec};
use crate::optim::{lbfgs, LbfgsSettings};
use crate::solver::{
    integrate_skeleton, Dynamics, LedgerEntry, Scheme, SolverConfig, SolverError, Stepper, Trajectory,
};
use crate::spectral::{advection_derivative_transpose, forchheimer_derivative, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("smooth-max temperature must be positive")]
    NonDifferentiableTarget,
    #[error("target infeasible: constraint violation {violation} above 10 x tolerance {tolerance}")]
    InfeasibleTarget { violation: f64, tolerance: f64 },
    #[error("optimiser did not converge (best action {action_value}, violation {violation})")]
    NotConverged { action_value: f64, violation: f64 },
}

impl From<SpectralError> for ActionError {
    fn from(e: SpectralError) -> Self {
        ActionError::Solver(e.into())
    }
}

/// Event whose rate is sought.
#[derive(Clone, Debug)]
pub enum Target {
    /// `‖u(T) − g‖_H ≤ tolerance`.
    TerminalPoint { state: SpectralField, tolerance: f64 },
    /// `sup_t ‖u(t)‖_H ≥ radius`, up to `tolerance`.
    ExitBall { radius: f64, tolerance: f64 },
}

impl Target {
    pub fn tolerance(&self) -> f64 {
        match self {
            Target::TerminalPoint { tolerance, .. } | Target::ExitBall { tolerance, .. } => *tolerance,
        }
    }
}

/// Controlled dynamics mapping a control to a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionDynamics {
    /// `du/dt = −[μAu + B(u) + βC(u)] + Φ(u)h`.
    Skeleton,
    /// `dg/dt = Φ(g)h`.
    ShortTime,
}

#[derive(Clone, Debug)]
pub struct OptimizerSettings {
    /// L-BFGS iterations per penalty stage.
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub outer_iterations: usize,
    pub initial_weight: f64,
    pub weight_growth: f64,
    pub max_weight: f64,
    /// Smooth-max temperatures, relative to `R²`.
    pub initial_temperature: f64,
    pub final_temperature: f64,
    pub starts: usize,
    pub seed: u64,
    /// Norm of the random initial whitened control.
    pub init_norm: f64,
    pub memory: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            gradient_tolerance: 1e-7,
            outer_iterations: 40,
            initial_weight: 10.0,
            weight_growth: 10.0,
            max_weight: 1e10,
            initial_temperature: 1.0,
            final_temperature: 1e-4,
            starts: 5,
            seed: 0,
            init_norm: 0.5,
            memory: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActionProblem {
    pub u0: SpectralField,
    /// Time grid, operator parameters, noise map and covariance. `epsilon`
    /// is ignored.
    pub solver: SolverConfig,
    pub target: Target,
    pub dynamics: ActionDynamics,
    pub settings: OptimizerSettings,
}

impl ActionProblem {
    fn check(&self) -> Result<usize, ActionError> {
        let steps = self.solver.steps()?;
        self.solver.params.validate()?;
        self.solver
            .noise
            .check(&self.solver.covariance)
            .map_err(SolverError::from)?;
        if self.dynamics == ActionDynamics::Skeleton && self.solver.scheme != Scheme::SemiImplicitEuler {
            return Err(ActionError::Config(
                "adjoint gradients are implemented for the semi-implicit scheme only".into(),
            ));
        }
        if !self.u0.grid().same_as(self.solver.covariance.grid()) {
            return Err(SpectralError::GridMismatch.into());
        }
        match &self.target {
            Target::TerminalPoint { state, tolerance } => {
                if !state.grid().same_as(self.u0.grid()) {
                    return Err(SpectralError::GridMismatch.into());
                }
                if !(*tolerance > 0.0) {
                    return Err(ActionError::Config("target tolerance must be positive".into()));
                }
            }
            Target::ExitBall { radius, tolerance } => {
                if !(*radius > 0.0) || !(*tolerance > 0.0) {
                    return Err(ActionError::Config("exit radius and tolerance must be positive".into()));
                }
            }
        }
        Ok(steps)
    }

    fn deterministic_config(&self) -> SolverConfig {
        let mut cfg = self.solver.clone();
        cfg.epsilon = 0.0;
        cfg.thresholds.clear();
        cfg.save_every = 0;
        cfg
    }
}

/// Penalty state of one augmented-Lagrangian stage.
#[derive(Clone, Debug)]
pub struct PenaltyState {
    pub weight: f64,
    /// Multiplier of the terminal constraint (modal), or empty.
    pub terminal_multiplier: Vec<f64>,
    /// Multiplier of the exit inequality.
    pub exit_multiplier: f64,
    /// Absolute smooth-max temperature.
    pub temperature: f64,
}

impl PenaltyState {
    /// Plain quadratic penalty with the problem's initial weight and
    /// temperature.
    pub fn initial(prob: &ActionProblem) -> Self {
        let temperature = match prob.target {
            Target::ExitBall { radius, .. } => prob.settings.initial_temperature * radius * radius,
            Target::TerminalPoint { .. } => 0.0,
        };
        Self {
            weight: prob.settings.initial_weight,
            terminal_multiplier: Vec::new(),
            exit_multiplier: 0.0,
            temperature,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionResult {
    #[serde(skip)]
    pub optimal_control: ControlPath,
    pub action_value: f64,
    pub constraint_violation: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Action of every start (`NaN` for starts that ended infeasible).
    pub start_values: Vec<f64>,
    /// `max − min` over feasible starts.
    pub spread: f64,
}

impl ActionResult {
    pub fn into_converged(self) -> Result<Self, ActionError> {
        if self.converged {
            Ok(self)
        } else {
            Err(ActionError::NotConverged {
                action_value: self.action_value,
                violation: self.constraint_violation,
            })
        }
    }
}

/// `½∫₀ᵀ‖h‖_0² dt`, left-endpoint rule.
pub fn evaluate_action(h: &ControlPath, q: &CovarianceSpec) -> f64 {
    h.action(q)
}

/// Path driven by `h`: the skeleton solve, or the noise-only ODE
/// `g_{n+1} = g_n + dt·Φ(g_n)h_n` for short-time dynamics.
pub fn forward_map(h: &ControlPath, prob: &ActionProblem) -> Result<Trajectory, ActionError> {
    prob.check()?;
    let cfg = prob.deterministic_config();
    match prob.dynamics {
        ActionDynamics::Skeleton => Ok(integrate_skeleton(&prob.u0, h, &cfg, None)?),
        ActionDynamics::ShortTime => {
            let states = short_time_states(&prob.u0, h, &cfg)?;
            let ledger = states
                .iter()
                .enumerate()
                .map(|(n, u)| LedgerEntry {
                    t: n as f64 * cfg.dt,
                    h_norm_sq: u.h_norm_sq(),
                    v_norm_sq: u.v_norm_sq(),
                    ..Default::default()
                })
                .collect();
            let last = states.len() - 1;
            Ok(Trajectory {
                dt: cfg.dt,
                ledger,
                snapshots: vec![(0.0, states[0].clone()), (last as f64 * cfg.dt, states[last].clone())],
                thresholds: Vec::new(),
                exit_times: Vec::new(),
                warnings: Vec::new(),
            })
        }
    }
}

fn short_time_states(
    u0: &SpectralField,
    h: &ControlPath,
    cfg: &SolverConfig,
) -> Result<Vec<SpectralField>, SolverError> {
    let steps = cfg.steps()?;
    if h.steps() != steps {
        return Err(SolverError::Config(format!(
            "control path has {} steps, solver expects {steps}",
            h.steps()
        )));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut g = u0.clone();
    let mut w = vec![0.0; u0.grid().modal_len()];
    states.push(g.clone());
    for n in 0..steps {
        let a = cfg.noise.factor(&g);
        cfg.noise.apply_modal(a, h.value(n), &mut w);
        g.add_modal(cfg.dt, &w);
        states.push(g.clone());
    }
    Ok(states)
}

/// Forward states, penalty and reverse sweep for one problem.
struct Evaluator<'a> {
    prob: &'a ActionProblem,
    cfg: SolverConfig,
    steps: usize,
    /// `√μ_j`, zero on modes outside the Cameron–Martin space.
    sqrt_mu: Vec<f64>,
    stepper: Option<Stepper>,
    decay: Vec<f64>,
}

struct Penalised {
    value: f64,
    /// `∂P/∂u_n` for every node (modal), `None` where zero.
    node_grads: Vec<Option<Vec<f64>>>,
    violation: f64,
    /// Raw constraint value: terminal residual or `R² − S`.
    terminal_residual: Vec<f64>,
    exit_gap: f64,
}

impl<'a> Evaluator<'a> {
    fn new(prob: &'a ActionProblem) -> Result<Self, ActionError> {
        let steps = prob.check()?;
        let cfg = prob.deterministic_config();
        let sqrt_mu = cfg.covariance.eigenvalues().iter().map(|m| m.sqrt()).collect();
        let stepper = match prob.dynamics {
            ActionDynamics::Skeleton => Some(Stepper::new(&cfg, Dynamics::Regular)?),
            ActionDynamics::ShortTime => None,
        };
        let rate = cfg.params.mu * cfg.dt;
        let decay = cfg.covariance.grid().ksq().iter().map(|&q| (-rate * q).exp()).collect();
        Ok(Self {
            prob,
            cfg,
            steps,
            sqrt_mu,
            stepper,
            decay,
        })
    }

    fn dim(&self) -> usize {
        self.steps * self.sqrt_mu.len()
    }

    fn control_from_y(&self, y: &[f64]) -> ControlPath {
        let m = self.sqrt_mu.len();
        let scale = 1.0 / self.cfg.dt.sqrt();
        let values = y
            .chunks(m)
            .map(|c| c.iter().zip(&self.sqrt_mu).map(|(v, s)| v * s * scale).collect())
            .collect();
        ControlPath::from_values(self.cfg.dt, values).expect("valid control")
    }

    fn forward(&mut self, h: &ControlPath) -> Result<Vec<SpectralField>, SolverError> {
        match self.prob.dynamics {
            ActionDynamics::ShortTime => short_time_states(&self.prob.u0, h, &self.cfg),
            ActionDynamics::Skeleton => {
                let stepper = self.stepper.as_mut().expect("skeleton stepper");
                let mut u = self.prob.u0.clone();
                let guard = self.cfg.blowup_factor * (1.0 + u.h_norm());
                let mut states = Vec::with_capacity(self.steps + 1);
                states.push(u.clone());
                for n in 0..self.steps {
                    stepper.step(&mut u, None, Some(h.value(n)), None);
                    let norm = u.h_norm();
                    if !norm.is_finite() || norm > guard {
                        return Err(SolverError::BlowUp {
                            time: (n + 1) as f64 * self.cfg.dt,
                            h_norm: norm,
                            guard,
                        });
                    }
                    states.push(u.clone());
                }
                Ok(states)
            }
        }
    }

    fn penalty(&self, states: &[SpectralField], pen: &PenaltyState) -> Result<Penalised, ActionError> {
        let k = states.len() - 1;
        let mut node_grads = vec![None; states.len()];
        match &self.prob.target {
            Target::TerminalPoint { state, .. } => {
                let c: Vec<f64> = states[k]
                    .to_modal()
                    .iter()
                    .zip(state.to_modal())
                    .map(|(a, b)| a - b)
                    .collect();
                let lam = &pen.terminal_multiplier;
                let lam_at = |j: usize| lam.get(j).copied().unwrap_or(0.0);
                let cc: f64 = c.iter().map(|x| x * x).sum();
                let lc: f64 = c.iter().enumerate().map(|(j, x)| lam_at(j) * x).sum();
                let grad = c.iter().enumerate().map(|(j, x)| lam_at(j) + pen.weight * x).collect();
                node_grads[k] = Some(grad);
                Ok(Penalised {
                    value: lc + 0.5 * pen.weight * cc,
                    node_grads,
                    violation: cc.sqrt(),
                    terminal_residual: c,
                    exit_gap: 0.0,
                })
            }
            Target::ExitBall { radius, .. } => {
                let tau = pen.temperature;
                if !(tau > 0.0) {
                    return Err(ActionError::NonDifferentiableTarget);
                }
                let q: Vec<f64> = states.iter().map(|u| u.h_norm_sq()).collect();
                let qmax = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = q.iter().map(|&x| ((x - qmax) / tau).exp()).collect();
                let z: f64 = weights.iter().sum();
                // log-mean-exp: never above the true maximum, and tends to
                // the time average at high temperature
                let smax = qmax + tau * (z / q.len() as f64).ln();
                let gap = radius * radius - smax;
                let w = pen.weight;
                let active = (pen.exit_multiplier + w * gap).max(0.0);
                let value = (active * active - pen.exit_multiplier * pen.exit_multiplier) / (2.0 * w);
                if active > 0.0 {
                    for (n, u) in states.iter().enumerate().skip(1) {
                        let p = weights[n] / z;
                        if p == 0.0 {
                            continue;
                        }
                        let coef = -active * p * 2.0;
                        node_grads[n] = Some(u.to_modal().iter().map(|x| coef * x).collect());
                    }
                }
                Ok(Penalised {
                    value,
                    node_grads,
                    violation: (radius - qmax.sqrt()).max(0.0),
                    terminal_residual: Vec::new(),
                    exit_gap: gap,
                })
            }
        }
    }

    /// `∂P/∂h_n` by the reverse sweep of the discrete scheme.
    fn backward(
        &self,
        h: &ControlPath,
        states: &[SpectralField],
        pen: &Penalised,
    ) -> Result<Vec<Vec<f64>>, ActionError> {
        let grid = self.prob.u0.grid();
        let phi = &self.cfg.noise;
        let dt = self.cfg.dt;
        let k = self.steps;
        let mut lam = match &pen.node_grads[k] {
            Some(g) => SpectralField::from_modal(grid, g),
            None => SpectralField::zeros(grid),
        };
        let mut grads = vec![vec![0.0; grid.modal_len()]; k];
        for n in (0..k).rev() {
            let u = &states[n];
            let hsq = u.h_norm_sq();
            let a = phi.factor_of(hsq);
            let slope = phi.factor_slope(hsq);
            let mut mstar = lam;
            if self.prob.dynamics == ActionDynamics::Skeleton {
                for (c, &e) in mstar.coeffs_mut().iter_mut().zip(&self.decay) {
                    c[0] *= e;
                    c[1] *= e;
                }
            }
            let mm = mstar.to_modal();
            let mut dh_dot = 0.0;
            for (j, g) in grads[n].iter_mut().enumerate() {
                let d = phi.diag()[j];
                *g = dt * a * d * mm[j];
                dh_dot += d * h.value(n)[j] * mm[j];
            }
            let mut next = mstar.clone();
            if self.prob.dynamics == ActionDynamics::Skeleton && !self.cfg.linear_only {
                let bt = advection_derivative_transpose(u, &mstar)?;
                let ct = forchheimer_derivative(u, &mstar, &self.cfg.params)?;
                next.axpy(-dt, &bt);
                next.axpy(-dt * self.cfg.params.beta, &ct);
            }
            if slope != 0.0 {
                next.axpy(dt * dh_dot * slope * 2.0, u);
            }
            if let Some(g) = &pen.node_grads[n] {
                next.add_modal(1.0, g);
            }
            lam = next;
        }
        Ok(grads)
    }

    /// Objective `½‖y‖² + P` and its gradient in `y`.
    fn value_grad_y(&mut self, y: &[f64], pen: &PenaltyState) -> Option<(f64, Vec<f64>)> {
        let h = self.control_from_y(y);
        let states = self.forward(&h).ok()?;
        let p = self.penalty(&states, pen).ok()?;
        let gh = self.backward(&h, &states, &p).ok()?;
        let m = self.sqrt_mu.len();
        let scale = 1.0 / self.cfg.dt.sqrt();
        let mut grad = y.to_vec();
        for (n, g) in gh.iter().enumerate() {
            for j in 0..m {
                grad[n * m + j] += g[j] * self.sqrt_mu[j] * scale;
            }
        }
        let value = 0.5 * y.iter().map(|v| v * v).sum::<f64>() + p.value;
        Some((value, grad))
    }
}

/// Gradient with respect to `h_n` (modal, per node) of
/// `evaluate_action(h) + penalty(forward_map(h))`, with the penalty given
/// by `pen`. Also returns the objective value.
pub fn adjoint_gradient(
    h: &ControlPath,
    prob: &ActionProblem,
    pen: &PenaltyState,
) -> Result<(f64, ControlPath), ActionError> {
    let mut ev = Evaluator::new(prob)?;
    if h.steps() != ev.steps {
        return Err(ActionError::Config("control path does not match the time grid".into()));
    }
    let states = ev.forward(h)?;
    let p = ev.penalty(&states, pen)?;
    let mut grads = ev.backward(h, &states, &p)?;
    let q = prob.solver.covariance.eigenvalues();
    let dt = prob.solver.dt;
    for (g, v) in grads.iter_mut().zip(h.values()) {
        for ((gj, &x), &m) in g.iter_mut().zip(v).zip(q) {
            if m > 0.0 {
                *gj += dt * x / m;
            }
        }
    }
    let value = evaluate_action(h, &prob.solver.covariance) + p.value;
    Ok((value, ControlPath::from_values(dt, grads)?))
}

impl From<crate::noise::NoiseError> for ActionError {
    fn from(e: crate::noise::NoiseError) -> Self {
        ActionError::Solver(e.into())
    }
}

struct StartOutcome {
    y: Vec<f64>,
    action: f64,
    violation: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
}

fn run_start(prob: &ActionProblem, y0: Vec<f64>) -> Result<StartOutcome, ActionError> {
    let mut ev = Evaluator::new(prob)?;
    let s = &prob.settings;
    let tol = prob.target.tolerance();
    let lb = LbfgsSettings {
        memory: s.memory,
        max_iterations: s.max_iterations,
        gradient_tolerance: s.gradient_tolerance,
    };
    let mut pen = PenaltyState::initial(prob);
    let final_tau = match prob.target {
        Target::ExitBall { radius, .. } => s.final_temperature * radius * radius,
        Target::TerminalPoint { .. } => 0.0,
    };
    let mut y = y0;
    let mut iterations = 0;
    let mut last_violation = f64::INFINITY;
    let mut outcome = None;
    for _ in 0..s.outer_iterations.max(1) {
        let pen_now = pen.clone();
        let res = lbfgs(|x| ev.value_grad_y(x, &pen_now), y.clone(), &lb);
        iterations += res.iterations;
        if res.value.is_finite() {
            y = res.x;
        }
        let h = ev.control_from_y(&y);
        let states = ev.forward(&h)?;
        let p = ev.penalty(&states, &pen)?;
        let action = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
        let at_final_tau = pen.temperature <= final_tau * (1.0 + 1e-12);
        let done = p.violation <= tol && res.converged && at_final_tau;
        outcome = Some(StartOutcome {
            y: y.clone(),
            action,
            violation: p.violation,
            converged: done,
            iterations,
            gradient_norm: res.gradient_norm,
        });
        if done {
            break;
        }
        // multiplier update
        match prob.target {
            Target::TerminalPoint { .. } => {
                if pen.terminal_multiplier.is_empty() {
                    pen.terminal_multiplier = vec![0.0; p.terminal_residual.len()];
                }
                for (l, c) in pen.terminal_multiplier.iter_mut().zip(&p.terminal_residual) {
                    *l += pen.weight * c;
                }
            }
            Target::ExitBall { .. } => {
                pen.exit_multiplier = (pen.exit_multiplier + pen.weight * p.exit_gap).max(0.0);
                pen.temperature = (pen.temperature * 0.1).max(final_tau);
            }
        }
        if p.violation > tol && p.violation > 0.25 * last_violation && pen.weight < s.max_weight {
            pen.weight = (pen.weight * s.weight_growth).min(s.max_weight);
        }
        last_violation = p.violation;
    }
    Ok(outcome.expect("at least one stage"))
}

/// Multi-start augmented-Lagrangian minimisation of the action subject to
/// the target. Starts run in parallel with per-start seeds; the best
/// feasible start is reported.
pub fn minimize_action(prob: &ActionProblem) -> Result<ActionResult, ActionError> {
    let ev = Evaluator::new(prob)?;
    let dim = ev.dim();
    let starts = prob.settings.starts.max(1);
    let init: Vec<Vec<f64>> = (0..starts)
        .map(|i| {
            let mut rng = trajectory_rng(prob.settings.seed, i as u64);
            let mut y: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let m = ev.sqrt_mu.len();
            for (idx, v) in y.iter_mut().enumerate() {
                if ev.sqrt_mu[idx % m] == 0.0 {
                    *v = 0.0;
                }
            }
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                y.iter_mut().for_each(|v| *v *= prob.settings.init_norm / n);
            }
            y
        })
        .collect();
    let outcomes: Vec<Result<StartOutcome, ActionError>> = init.into_par_iter().map(|y0| run_start(prob, y0)).collect();
    let outcomes: Vec<StartOutcome> = outcomes.into_iter().collect::<Result<_, _>>()?;
    let tol = prob.target.tolerance();
    let feasible = |o: &StartOutcome| o.violation <= tol;
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            feasible(b)
                .cmp(&feasible(a))
                .then(a.action.partial_cmp(&b.action).unwrap_or(std::cmp::Ordering::Equal))
                .then(
                    a.violation
                        .partial_cmp(&b.violation)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        })
        .map(|(i, _)| i)
        .expect("at least one start");
    let b = &outcomes[best];
    if b.violation > 10.0 * tol {
        return Err(ActionError::InfeasibleTarget {
            violation: b.violation,
            tolerance: tol,
        });
    }
    let start_values: Vec<f64> = outcomes
        .iter()
        .map(|o| if feasible(o) { o.action } else { f64::NAN })
        .collect();
    let fv: Vec<f64> = start_values.iter().copied().filter(|v| !v.is_nan()).collect();
    let spread = if fv.is_empty() {
        f64::NAN
    } else {
        fv.iter().copied().fold(f64::NEG_INFINITY, f64::max) - fv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(ActionResult {
        optimal_control: ev.control_from_y(&b.y),
        action_value: b.action,
        constraint_violation: b.violation,
        converged: b.converged,
        iterations: b.iterations,
        gradient_norm: b.gradient_norm,
        start_values,
        spread,
    })
}

/// `J(B_R^c)`: minimal action to leave the ball of radius `R`. Zero when
/// `u0` already lies outside.
pub fn rate_of_set(prob: &ActionProblem) -> Result<ActionResult, ActionError> {
    let Target::ExitBall { radius, .. } = prob.target else {
        return Err(ActionError::Config("rate_of_set needs an exit-ball target".into()));
    };
    let steps = prob.check()?;
    if prob.u0.h_norm() >= radius {
        let grid = prob.u0.grid();
        return Ok(ActionResult {
            optimal_control: ControlPath::zeros(grid, steps, prob.solver.dt),
            action_value: 0.0,
            constraint_violation: 0.0,
            converged: true,
            iterations: 0,
            gradient_norm: 0.0,
            start_values: vec![0.0],
            spread: 0.0,
        });
    }
    minimize_action(prob)
}

/// Continuous-time rate of leaving the ball of radius `R` from rest for the
/// linear system with additive diagonal noise:
/// `min_j R²μλ_j / (μ_j d_j² (1 − e^{−2μλ_jT}))`.
pub fn linear_exit_rate(solver: &SolverConfig, radius: f64) -> f64 {
    let grid = solver.covariance.grid();
    let mu = solver.params.mu;
    let t = solver.horizon;
    solver
        .covariance
        .eigenvalues()
        .iter()
        .zip(solver.noise.diag())
        .enumerate()
        .filter(|(_, (m, d))| **m > 0.0 && **d != 0.0)
        .map(|(j, (m, d))| {
            let lam = grid.modal_eigenvalue(j);
            radius * radius * mu * lam / (m * d * d * -(-2.0 * mu * lam * t).exp_m1())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Short-time rate `‖g − u0‖_0²/(2T)` for `Φ = D` additive: the
/// Cameron–Martin norm of `D^{−1}(g − u0)`.
pub fn short_time_rate(solver: &SolverConfig, u0: &SpectralField, g: &SpectralField) -> f64 {
    let diff: Vec<f64> = g
        .to_modal()
        .iter()
        .zip(u0.to_modal())
        .zip(solver.noise.diag())
        .map(|((a, b), d)| {
            if *d != 0.0 {
                (a - b) / d
            } else if a != &b {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    solver.covariance.cameron_martin_modal_sq(&diff) / (2.0 * solver.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseMap;
    use crate::spectral::{random_field_with_norm, OperatorParams, TorusGrid};

    fn problem(target_kind: u8, dynamics: ActionDynamics) -> (ActionProblem, ControlPath) {
        let g = TorusGrid::new(4, 2.0).unwrap();
        let q = CovarianceSpec::power_law(&g, 1.5, 0.0).unwrap();
        let diag: Vec<f64> = (0..g.modal_len()).map(|j| 1.0 / (1.0 + 0.1 * j as f64)).collect();
        let phi = NoiseMap::linear_bounded(diag, 0.8, 0.5);
        let cfg = SolverConfig::new(
            OperatorParams::new(0.7, 1.0, 3.0).unwrap(),
            q.clone(),
            phi,
            1.0 / 16.0,
            1.0,
        );
        let mut rng = trajectory_rng(5, 0);
        let u0 = random_field_with_norm(&g, 2.0, 0.8, &mut rng);
        let target = if target_kind == 0 {
            Target::TerminalPoint {
                state: random_field_with_norm(&g, 2.0, 0.5, &mut rng),
                tolerance: 1e-6,
            }
        } else {
            Target::ExitBall {
                radius: 1.2,
                tolerance: 1e-4,
            }
        };
        let h = ControlPath::from_values(
            cfg.dt,
            (0..16)
                .map(|_| {
                    (0..g.modal_len())
                        .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3)
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let prob = ActionProblem {
            u0,
            solver: cfg,
            target,
            dynamics,
            settings: OptimizerSettings::default(),
        };
        (prob, h)
    }

    fn fd_check(prob: &ActionProblem, h: &ControlPath) {
        let mut pen = PenaltyState::initial(prob);
        pen.exit_multiplier = 0.3;
        pen.terminal_multiplier = vec![0.1; h.value(0).len()];
        let (_, grad) = adjoint_gradient(h, prob, &pen).unwrap();
        let mut rng = trajectory_rng(9, 1);
        for _ in 0..5 {
            let dir = ControlPath::from_values(
                h.dt(),
                (0..h.steps())
                    .map(|_| {
                        (0..h.value(0).len())
                            .map(|_| rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect(),
            )
            .unwrap();
            let eps = 1e-6;
            let shift = |c: f64| {
                let vals = h
                    .values()
                    .iter()
                    .zip(dir.values())
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + c * y).collect())
                    .collect();
                let hp = ControlPath::from_values(h.dt(), vals).unwrap();
                adjoint_gradient(&hp, prob, &pen).unwrap().0
            };
            let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
            let an: f64 = grad
                .values()
                .iter()
                .zip(dir.values())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "fd {fd} adjoint {an}");
        }
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        for kind in [0, 1] {
            for dynamics in [ActionDynamics::Skeleton, ActionDynamics::ShortTime] {
                let (prob, h) = problem(kind, dynamics);
                fd_check(&prob, &h);
            }
        }
    }

    #[test]
    fn straight_line_control_for_short_time() {
        let g = TorusGrid::new(2, 1.0).unwrap();
        let q = CovarianceSpec::power_law(&g, 1.5, 0.0).unwrap();
        let cfg = SolverConfig::new(
            OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
            q,
            NoiseMap::identity(&g),
            0.1,
            1.0,
        );
        let mut rng = trajectory_rng(2, 0);
        let u0 = random_field_with_norm(&g, 2.0, 0.5, &mut rng);
        let target = random_field_with_norm(&g, 2.0, 0.7, &mut rng);
        let want = short_time_rate(&cfg, &u0, &target);
        let prob = ActionProblem {
            u0,
            solver: cfg,
            target: Target::TerminalPoint {
                state: target,
                tolerance: 1e-8,
            },
            dynamics: ActionDynamics::ShortTime,
            settings: OptimizerSettings {
                starts: 2,
                ..Default::default()
            },
        };
        let res = minimize_action(&prob).unwrap();
        assert!(res.converged, "{res:?}");
        assert!(
            (res.action_value - want).abs() < 1e-4 * want,
            "{} vs {want}",
            res.action_value
        );
    }
}
