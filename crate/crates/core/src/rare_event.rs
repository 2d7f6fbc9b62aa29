//! Monte-Carlo exit probabilities with exact binomial intervals, one-sided
//! checks of the exponential tail bounds, and small-noise scaling curves.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};
use thiserror::Error;

use crate::noise::trajectory_rng;
use crate::solver::{run_path, Dynamics, Forcing, SolverConfig, SolverError};
use crate::spectral::SpectralField;

/// Hits needed before `−ε log p̂` is reported as resolved.
pub const MIN_HITS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RareEventError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Ensemble description. `solver.epsilon` is the noise level of single-level
/// studies; `epsilons` drives scaling studies.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub n_paths: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
    pub u0: SpectralField,
    pub dynamics: Dynamics,
    pub thresholds: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Two-sided confidence level of the reported intervals.
    pub confidence: f64,
}

impl EnsembleSpec {
    pub fn new(solver: SolverConfig, u0: SpectralField, n_paths: usize, master_seed: u64) -> Self {
        Self {
            n_paths,
            master_seed,
            solver,
            u0,
            dynamics: Dynamics::Regular,
            thresholds: Vec::new(),
            epsilons: Vec::new(),
            confidence: 0.99,
        }
    }

    fn validate(&self) -> Result<(), RareEventError> {
        if self.n_paths == 0 {
            return Err(RareEventError::Config("n_paths must be at least 1".into()));
        }
        if self.thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RareEventError::Config("thresholds must be strictly increasing".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RareEventError::Config("confidence must lie in (0, 1)".into()));
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Binomial proportion with a Clopper–Pearson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub hits: usize,
    pub n: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
}

impl ProbabilityEstimate {
    pub fn from_counts(hits: usize, n: usize, confidence: f64) -> Self {
        let (ci_low, ci_high) = clopper_pearson(hits, n, confidence);
        Self {
            hits,
            n,
            p_hat: hits as f64 / n as f64,
            ci_low,
            ci_high,
            confidence,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.hits >= MIN_HITS
    }
}

/// Exact two-sided binomial interval.
pub fn clopper_pearson(hits: usize, n: usize, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let (x, n) = (hits as f64, n as f64);
    let low = if hits == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("beta shape").inverse_cdf(alpha / 2.0)
    };
    let high = if hits as f64 >= n {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .expect("beta shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

/// Per-path statistics kept by the ensemble driver.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSummary {
    /// `max_n ‖u_n‖_H` over the time grid, `t = 0` included; `∞` on blow-up.
    pub sup_h_norm: f64,
    /// `max_n ‖u_n − u⁰_n‖_H` against the noise-free path, when requested
    /// (0 otherwise).
    pub sup_deviation: f64,
    /// Modal coordinates of the terminal state, when requested.
    pub terminal: Option<Vec<f64>>,
    pub blew_up: bool,
}

#[derive(Clone, Copy, Default)]
struct Wants {
    terminal: bool,
}

fn level_stream(level: usize, index: usize) -> u64 {
    ((level as u64) << 40) | index as u64
}

fn deterministic_nodes(spec: &EnsembleSpec) -> Result<Vec<Vec<f64>>, RareEventError> {
    let mut cfg = spec.solver.clone();
    cfg.epsilon = 0.0;
    let mut nodes = Vec::new();
    let mut obs = |_: usize, _: f64, u: &SpectralField| nodes.push(u.to_modal());
    run_path::<rand_chacha::ChaCha8Rng>(
        &spec.u0,
        &cfg,
        Dynamics::Regular,
        &Forcing::None,
        None,
        None,
        false,
        Some(&mut obs),
    )?;
    Ok(nodes)
}

fn simulate_level(
    spec: &EnsembleSpec,
    epsilon: f64,
    level: usize,
    wants: Wants,
    reference: Option<&[Vec<f64>]>,
) -> Result<Vec<PathSummary>, RareEventError> {
    let mut cfg = spec.solver.clone();
    cfg.epsilon = epsilon;
    cfg.thresholds.clear();
    cfg.save_every = 0;
    cfg.validate()?;
    let run = |i: usize| -> PathSummary {
        let mut rng = trajectory_rng(spec.master_seed, level_stream(level, i));
        let mut sup_sq = 0.0f64;
        let mut dev_sq = 0.0f64;
        let mut scratch = vec![0.0; spec.u0.grid().modal_len()];
        let mut obs = |n: usize, _: f64, u: &SpectralField| {
            sup_sq = sup_sq.max(u.h_norm_sq());
            if let Some(nodes) = reference {
                u.write_modal(&mut scratch);
                let d: f64 = scratch.iter().zip(&nodes[n]).map(|(a, b)| (a - b) * (a - b)).sum();
                dev_sq = dev_sq.max(d);
            }
        };
        match run_path(
            &spec.u0,
            &cfg,
            spec.dynamics,
            &Forcing::None,
            None,
            Some(&mut rng),
            false,
            Some(&mut obs),
        ) {
            Ok(traj) => PathSummary {
                sup_h_norm: sup_sq.sqrt(),
                sup_deviation: dev_sq.sqrt(),
                terminal: wants.terminal.then(|| traj.final_state().to_modal()),
                blew_up: false,
            },
            Err(_) => PathSummary {
                sup_h_norm: f64::INFINITY,
                sup_deviation: f64::INFINITY,
                terminal: None,
                blew_up: true,
            },
        }
    };
    Ok((0..spec.n_paths).into_par_iter().map(run).collect())
}

/// Runs the ensemble at `spec.solver.epsilon` and returns per-path
/// summaries in trajectory-index order.
pub fn run_ensemble(
    spec: &EnsembleSpec,
    with_deviation: bool,
    with_terminal: bool,
) -> Result<Vec<PathSummary>, RareEventError> {
    spec.validate()?;
    let reference = if with_deviation {
        Some(deterministic_nodes(spec)?)
    } else {
        None
    };
    simulate_level(
        spec,
        spec.solver.epsilon,
        0,
        Wants {
            terminal: with_terminal,
        },
        reference.as_deref(),
    )
}

fn count_exceeding(values: impl Iterator<Item = f64>, radius: f64) -> usize {
    values.filter(|&s| s > radius).count()
}

/// `P{sup_{t≤T} ‖u(t)‖_H > R}` with a Clopper–Pearson interval.
pub fn estimate_exit_probability(spec: &EnsembleSpec, radius: f64) -> Result<ProbabilityEstimate, RareEventError> {
    let paths = run_ensemble(spec, false, false)?;
    Ok(exit_probability_of(&paths, radius, spec.confidence))
}

/// Exit probabilities of one stored ensemble for several radii. Nesting
/// `p̂(R₂) ≤ p̂(R₁)` for `R₂ > R₁` holds pathwise.
pub fn exit_probability_of(paths: &[PathSummary], radius: f64, confidence: f64) -> ProbabilityEstimate {
    let hits = count_exceeding(paths.iter().map(|p| p.sup_h_norm), radius);
    ProbabilityEstimate::from_counts(hits, paths.len(), confidence)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Consistent,
    Violated,
    /// Bound `≥ 1`: says nothing.
    Vacuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub radius: f64,
    pub estimate: ProbabilityEstimate,
    pub bound: f64,
    /// `bound − upper CI`.
    pub slack: f64,
    pub verdict: Verdict,
}

impl BoundReport {
    pub fn new(radius: f64, estimate: ProbabilityEstimate, bound: f64) -> Self {
        let verdict = if bound >= 1.0 {
            Verdict::Vacuous
        } else if estimate.ci_high > bound {
            Verdict::Violated
        } else {
            Verdict::Consistent
        };
        Self {
            radius,
            estimate,
            bound,
            slack: bound - estimate.ci_high,
            verdict,
        }
    }
}

fn additive_trace_rho(spec: &EnsembleSpec) -> Result<f64, RareEventError> {
    let cfg = &spec.solver;
    if !cfg.noise.is_additive() {
        return Err(RareEventError::Config(
            "the exponential tail bounds are stated for additive noise only".into(),
        ));
    }
    if spec.dynamics != Dynamics::Regular {
        return Err(RareEventError::Config("tail bounds apply to the regular system".into()));
    }
    let (_, sigma) = spec.dynamics.scales(cfg.epsilon);
    Ok(cfg.covariance.trace() * cfg.noise.rho(cfg.horizon, sigma))
}

/// `exp{‖u0‖² + Tr(Q)ρ_T} · exp{−R²/e^{4Tr(Q)ρ_T}}`, with
/// `ρ_T = ∫‖Φ*Φ‖_op dt` for the noise coefficient `√ε Φ`.
pub fn exit_tail_bound(spec: &EnsembleSpec, radius: f64) -> Result<f64, RareEventError> {
    let tr_rho = additive_trace_rho(spec)?;
    Ok((spec.u0.h_norm_sq() + tr_rho).exp() * (-radius * radius / (4.0 * tr_rho).exp()).exp())
}

/// `e^{Tr(Q)ρ_T} · exp[−R²/e^{4Tr(Q)ρ_T}]`.
pub fn deviation_tail_bound(spec: &EnsembleSpec, radius: f64) -> Result<f64, RareEventError> {
    let tr_rho = additive_trace_rho(spec)?;
    Ok(tr_rho.exp() * (-radius * radius / (4.0 * tr_rho).exp()).exp())
}

/// One-sided comparison of `P{sup‖u‖_H > R}` with the exit tail bound.
pub fn check_exit_bound(spec: &EnsembleSpec, radii: &[f64]) -> Result<Vec<BoundReport>, RareEventError> {
    additive_trace_rho(spec)?;
    let paths = run_ensemble(spec, false, false)?;
    exit_bound_reports(spec, &paths, radii)
}

/// One-sided comparison of `P{sup‖u − u⁰‖_H > R}` with the deviation bound;
/// `u⁰` is the noise-free path from the same `u0` on the same grid.
pub fn check_deviation_bound(spec: &EnsembleSpec, radii: &[f64]) -> Result<Vec<BoundReport>, RareEventError> {
    additive_trace_rho(spec)?;
    let paths = run_ensemble(spec, true, false)?;
    deviation_bound_reports(spec, &paths, radii)
}

/// Exit-bound reports for an ensemble already simulated from `spec`.
pub fn exit_bound_reports(
    spec: &EnsembleSpec,
    paths: &[PathSummary],
    radii: &[f64],
) -> Result<Vec<BoundReport>, RareEventError> {
    radii
        .iter()
        .map(|&r| {
            let b = exit_tail_bound(spec, r)?;
            Ok(BoundReport::new(r, exit_probability_of(paths, r, spec.confidence), b))
        })
        .collect()
}

/// Deviation-bound reports; `paths` must carry deviations
/// (see [`run_ensemble`]).
pub fn deviation_bound_reports(
    spec: &EnsembleSpec,
    paths: &[PathSummary],
    radii: &[f64],
) -> Result<Vec<BoundReport>, RareEventError> {
    radii
        .iter()
        .map(|&r| {
            let b = deviation_tail_bound(spec, r)?;
            let hits = count_exceeding(paths.iter().map(|p| p.sup_deviation), r);
            Ok(BoundReport::new(
                r,
                ProbabilityEstimate::from_counts(hits, paths.len(), spec.confidence),
                b,
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub estimate: ProbabilityEstimate,
    /// `−speed·log p̂`.
    pub value: f64,
    /// Values at the interval endpoints (`band_low` from `ci_high`).
    pub band_low: f64,
    pub band_high: f64,
    pub underresolved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub rows: Vec<ScalingRow>,
    pub reference: Option<f64>,
    /// Distances to the reference are non-increasing as `ε` decreases, over
    /// resolved levels.
    pub monotone_toward_reference: bool,
    /// `|value − reference|/reference` at the smallest resolved `ε`.
    pub final_relative_error: Option<f64>,
}

/// LDP speed of a level: the squared noise amplitude, `ε` for the regular
/// system and `ε²` for the short-time system.
pub fn ldp_speed(dynamics: Dynamics, epsilon: f64) -> f64 {
    let (_, sigma) = dynamics.scales(epsilon);
    sigma * sigma
}

fn scaling_row(dynamics: Dynamics, epsilon: f64, est: ProbabilityEstimate) -> ScalingRow {
    let speed = ldp_speed(dynamics, epsilon);
    let f = |p: f64| if p > 0.0 { -speed * p.ln() } else { f64::INFINITY };
    ScalingRow {
        epsilon,
        estimate: est,
        value: f(est.p_hat),
        band_low: f(est.ci_high),
        band_high: f(est.ci_low),
        underresolved: !est.is_resolved(),
    }
}

fn summarise(mut rows: Vec<ScalingRow>, reference: Option<f64>) -> ScalingCurve {
    rows.sort_by(|a, b| b.epsilon.partial_cmp(&a.epsilon).unwrap());
    let resolved: Vec<&ScalingRow> = rows.iter().filter(|r| !r.underresolved).collect();
    let (monotone, final_err) = match reference {
        Some(j) if !resolved.is_empty() => {
            let d: Vec<f64> = resolved.iter().map(|r| (r.value - j).abs()).collect();
            let mono = d.windows(2).all(|w| w[1] <= w[0]);
            let last = resolved.last().unwrap().value;
            let err = if j != 0.0 {
                (last - j).abs() / j.abs()
            } else {
                last.abs()
            };
            (mono, Some(err))
        }
        _ => (false, None),
    };
    ScalingCurve {
        rows,
        reference,
        monotone_toward_reference: monotone,
        final_relative_error: final_err,
    }
}

/// `−ε log p̂(ε)` for `p̂ = P{sup‖u^ε‖_H > R}` over `spec.epsilons`, with
/// an optional reference rate `J(B_R^c)`. Levels with fewer than
/// [`MIN_HITS`] hits are flagged, not extrapolated.
pub fn ldp_scaling_curve(
    spec: &EnsembleSpec,
    radius: f64,
    reference: Option<f64>,
) -> Result<ScalingCurve, RareEventError> {
    spec.validate()?;
    if spec.epsilons.is_empty() {
        return Err(RareEventError::Config("scaling study needs a list of epsilons".into()));
    }
    let mut rows = Vec::new();
    for (level, &eps) in spec.epsilons.iter().enumerate() {
        let paths = simulate_level(spec, eps, level + 1, Wants::default(), None)?;
        rows.push(scaling_row(
            spec.dynamics,
            eps,
            exit_probability_of(&paths, radius, spec.confidence),
        ));
    }
    Ok(summarise(rows, reference))
}

/// `−ε² log P{‖ũ^ε(T) − g‖_H < δ}` for the short-time system over
/// `spec.epsilons`, against the reference rate (typically `‖g−u0‖_0²/(2T)`).
pub fn short_time_scaling(
    spec: &EnsembleSpec,
    target: &SpectralField,
    delta: f64,
    reference: Option<f64>,
) -> Result<ScalingCurve, RareEventError> {
    spec.validate()?;
    if spec.dynamics != Dynamics::ShortTime {
        return Err(RareEventError::Config(
            "short_time_scaling needs short-time dynamics".into(),
        ));
    }
    if !spec.solver.noise.is_additive() {
        return Err(RareEventError::Config("short_time_scaling needs additive noise".into()));
    }
    if spec.epsilons.is_empty() {
        return Err(RareEventError::Config("scaling study needs a list of epsilons".into()));
    }
    let g = target.to_modal();
    let mut rows = Vec::new();
    for (level, &eps) in spec.epsilons.iter().enumerate() {
        let wants = Wants { terminal: true };
        let paths = simulate_level(spec, eps, level + 1, wants, None)?;
        let hits = paths
            .iter()
            .filter(|p| {
                p.terminal
                    .as_ref()
                    .is_some_and(|x| x.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < delta * delta)
            })
            .count();
        let est = ProbabilityEstimate::from_counts(hits, paths.len(), spec.confidence);
        rows.push(scaling_row(spec.dynamics, eps, est));
    }
    Ok(summarise(rows, reference))
}
