//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion to stdout
//! (also without `--nocapture`) and fails if any criterion fails.
//!
//! Oracles are computed here from first principles: direct mode-by-mode
//! summation on a fine grid for the operator identities, closed-form
//! Ornstein–Uhlenbeck and quadratic-control formulas for the linear checks,
//! and central finite differences for gradients.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scbf_core::action::{
    adjoint_gradient, minimize_action, rate_of_set, ActionDynamics, ActionProblem, OptimizerSettings, PenaltyState,
    Target,
};
use scbf_core::noise::trajectory_rng;
use scbf_core::rare_event::{
    deviation_bound_reports, exit_bound_reports, ldp_scaling_curve, run_ensemble, EnsembleSpec, ScalingCurve, Verdict,
};
use scbf_core::solver::{integrate_deterministic, integrate_stochastic, Forcing};
use scbf_core::spectral::{
    advection, forchheimer, lp_norm, monotonicity_gap, random_field_with_norm, stokes_apply, trilinear_form,
};
use scbf_core::verify::refinement_setup;
use scbf_core::{ControlPath, CovarianceSpec, NoiseMap, OperatorParams, SolverConfig, SpectralField, TorusGrid};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Direct evaluation of a field and its gradient at the points of an
/// `m × m` grid by summing every Fourier mode.
mod naive {
    use super::*;

    pub struct Sampled {
        pub vals: Vec<[f64; 2]>,
        /// `grads[p][axis][component]`.
        pub grads: Vec<[[f64; 2]; 2]>,
    }

    #[allow(clippy::needless_range_loop)]
    pub fn sample(u: &SpectralField, m: usize) -> Sampled {
        let grid = u.grid();
        let n = grid.modes() as i32;
        let table: Vec<Vec<(f64, f64)>> = (-n..=n)
            .map(|k| {
                (0..m)
                    .map(|a| {
                        let x = 2.0 * PI * (k as f64) * (a as f64) / m as f64;
                        (x.cos(), x.sin())
                    })
                    .collect()
            })
            .collect();
        let mut vals = vec![[0.0; 2]; m * m];
        let mut grads = vec![[[0.0; 2]; 2]; m * m];
        for (idx, c) in u.coeffs().iter().enumerate() {
            if c[0].norm_sqr() + c[1].norm_sqr() == 0.0 {
                continue;
            }
            let (k1, k2) = grid.wavevector(idx);
            let (e1, e2) = (&table[(k1 + n) as usize], &table[(k2 + n) as usize]);
            for a in 0..m {
                for b in 0..m {
                    let (pr, pi) = (
                        e1[a].0 * e2[b].0 - e1[a].1 * e2[b].1,
                        e1[a].0 * e2[b].1 + e1[a].1 * e2[b].0,
                    );
                    let p = a * m + b;
                    for j in 0..2 {
                        let re = c[j].re * pr - c[j].im * pi;
                        let im = c[j].re * pi + c[j].im * pr;
                        vals[p][j] += re;
                        // ∂ e^{ik·x} = i k e^{ik·x}; keep the real part.
                        grads[p][0][j] -= k1 as f64 * im;
                        grads[p][1][j] -= k2 as f64 * im;
                    }
                }
            }
        }
        Sampled { vals, grads }
    }

    pub fn cell(m: usize) -> f64 {
        (2.0 * PI / m as f64).powi(2)
    }

    pub fn norm(v: [f64; 2]) -> f64 {
        v[0].hypot(v[1])
    }

    pub fn grad_norm(g: [[f64; 2]; 2]) -> f64 {
        (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt()
    }

    /// `(∫(u·∇)v·w, ∫|u||∇v||w|)`.
    pub fn trilinear(u: &Sampled, v: &Sampled, w: &Sampled, m: usize) -> (f64, f64) {
        let (mut s, mut a) = (0.0, 0.0);
        for p in 0..m * m {
            let (uu, g, ww) = (u.vals[p], v.grads[p], w.vals[p]);
            for j in 0..2 {
                s += (uu[0] * g[0][j] + uu[1] * g[1][j]) * ww[j];
            }
            a += norm(uu) * grad_norm(g) * norm(ww);
        }
        (s * cell(m), a * cell(m))
    }

    pub fn dirichlet(u: &Sampled, m: usize) -> f64 {
        u.grads.iter().map(|g| grad_norm(*g).powi(2)).sum::<f64>() * cell(m)
    }

    pub fn lp_pow(u: &Sampled, m: usize, p: i32) -> f64 {
        u.vals.iter().map(|v| norm(*v).powi(p)).sum::<f64>() * cell(m)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn field(grid: &TorusGrid, rng: &mut ChaCha8Rng) -> SpectralField {
    let norm = log_uniform(rng, 0.1, 10.0);
    random_field_with_norm(grid, 1.0, norm, rng)
}

fn c1_operator_identities() -> Outcome {
    const TOL: f64 = 1e-11;
    let grid = TorusGrid::new(4, 3.0).unwrap();
    let p3 = OperatorParams::new(1.0, 0.5, 3.0).unwrap();
    let p5 = OperatorParams::new(1.0, 1.0, 5.0).unwrap();
    // Highest frequency of |u|^6 is 6N = 24 < m, so the rule is exact.
    let m = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let names = [
        "<B(u),u>",
        "b skew",
        "b vs direct sum",
        "<Au,u>",
        "<C(u),u> r=3",
        "<C(u),u> r=5",
    ];
    let mut worst = [0.0f64; 6];
    let samples = 1000;
    for _ in 0..samples {
        let (u, v, w) = (field(&grid, &mut rng), field(&grid, &mut rng), field(&grid, &mut rng));
        let (su, sv, sw) = (naive::sample(&u, m), naive::sample(&v, m), naive::sample(&w, m));

        let bu = advection(&u).unwrap();
        let e = [
            bu.inner(&u).abs() / (bu.h_norm() * u.h_norm()),
            {
                let (_, s1) = naive::trilinear(&su, &sv, &sw, m);
                let (_, s2) = naive::trilinear(&su, &sw, &sv, m);
                let skew = trilinear_form(&u, &v, &w).unwrap() + trilinear_form(&u, &w, &v).unwrap();
                skew.abs() / (s1 + s2)
            },
            {
                let (direct, scale) = naive::trilinear(&su, &sv, &sw, m);
                (trilinear_form(&u, &v, &w).unwrap() - direct).abs() / scale
            },
            {
                let oracle = naive::dirichlet(&su, m);
                (stokes_apply(&u).inner(&u) - oracle).abs() / oracle
            },
            {
                let oracle = naive::lp_pow(&su, m, 4);
                (forchheimer(&u, &p3).unwrap().inner(&u) - oracle).abs() / oracle
            },
            {
                let oracle = naive::lp_pow(&su, m, 6);
                (forchheimer(&u, &p5).unwrap().inner(&u) - oracle).abs() / oracle
            },
        ];
        for (w, x) in worst.iter_mut().zip(e) {
            *w = w.max(x);
        }
    }
    let passed = worst.iter().all(|&w| w <= TOL);
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        passed,
        format!("{samples} fields, worst relative: {detail} (tol {TOL:.0e})"),
    )
}

fn c2_monotonicity() -> Outcome {
    const TOL: f64 = 1e-10;
    let grid = TorusGrid::new(4, 3.0).unwrap();
    let pairs = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut parts = Vec::new();
    let mut passed = true;
    for params in [
        OperatorParams::new(1.0, 0.5, 3.0).unwrap(),
        OperatorParams::new(1.0, 1.0, 5.0).unwrap(),
    ] {
        let mut worst = f64::INFINITY;
        for i in 0..pairs {
            let u = field(&grid, &mut rng);
            // Half the pairs are close, where the gap is a small difference.
            let v = if i % 2 == 0 {
                field(&grid, &mut rng)
            } else {
                let z = random_field_with_norm(&grid, 1.0, u.h_norm() * log_uniform(&mut rng, 1e-4, 1.0), &mut rng);
                &u + &z
            };
            let w = &u - &v;
            let r = params.r;
            let scale = params.mu * w.v_norm_sq()
                + params.eta() * w.h_norm_sq()
                + params.beta * (lp_norm(&u, r + 1.0).powf(r + 1.0) + lp_norm(&v, r + 1.0).powf(r + 1.0));
            let gap = monotonicity_gap(&u, &v, &params).unwrap();
            worst = worst.min(gap / scale);
        }
        passed &= worst >= -TOL;
        parts.push(format!("r={} min gap/scale {worst:.2e}", params.r));
    }
    // Shift for r = 5, μ = β = 1 by Young's inequality with exponents 2 and
    // (r−1)/2: ((r−3)/(2μ(r−1)))·(2/(βμ(r−1)))^{2/(r−3)} = (1/4)(1/2).
    let eta = OperatorParams::new(1.0, 1.0, 5.0).unwrap().eta();
    passed &= eta == 0.125;
    parts.push(format!("eta(r=5) = {eta}"));
    Outcome::new(passed, format!("{pairs} pairs each; {}", parts.join(", ")))
}

fn c3_energy_equality() -> Outcome {
    let dts = [4e-3, 2e-3, 1e-3];
    let mut passed = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let (cfg, u0) = refinement_setup(4, seed).unwrap();
        let e0 = u0.h_norm_sq();
        let rel: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let tr = integrate_deterministic(&u0, &Forcing::None, &cfg.clone().with_dt(dt)).unwrap();
                tr.residual().abs() / e0
            })
            .collect();
        let order = (0..2)
            .map(|i| (rel[i] / rel[i + 1]).ln() / 2f64.ln())
            .fold(f64::INFINITY, f64::min);
        passed &= order >= 1.0 && rel[2] <= 1e-6;
        parts.push(format!(
            "seed {seed}: |R|/E0 {:.2e} {:.2e} {:.2e}, order {order:.3}",
            rel[0], rel[1], rel[2]
        ));
    }
    Outcome::new(
        passed,
        format!("{} (need order >= 1, |R|/E0 <= 1e-6 at dt 1e-3)", parts.join("; ")),
    )
}

/// Per-path `(R, drift defect)` at the end of the horizon.
fn ito_residuals(cfg: &SolverConfig, u0: &SpectralField, paths: usize, seed: u64) -> Vec<(f64, f64)> {
    use rayon::prelude::*;
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let tr = integrate_stochastic(u0, cfg, &mut trajectory_rng(seed, i as u64)).unwrap();
            let last = tr.ledger.last().unwrap();
            (last.residual, last.drift_defect)
        })
        .collect()
}

fn mean_se(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let mean = x.clone().sum::<f64>() / n;
    let var = x.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn c4_ito_energy() -> Outcome {
    let grid = TorusGrid::new(4, 2.0).unwrap();
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).unwrap();
    let base = SolverConfig::new(
        OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
        q,
        NoiseMap::identity(&grid),
        8e-3,
        0.512,
    )
    .with_epsilon(1e-3);
    let u0 = random_field_with_norm(&grid, 1.0, 3.0, &mut ChaCha8Rng::seed_from_u64(3));
    let paths = 1000;
    let mut passed = true;
    let mut means = Vec::new();
    let mut parts = Vec::new();
    for dt in [8e-3, 4e-3, 2e-3] {
        let res = ito_residuals(&base.clone().with_dt(dt), &u0, paths, 17);
        let (mean_r, _) = mean_se(res.iter().map(|r| r.0));
        let (bias, _) = mean_se(res.iter().map(|r| r.1));
        // Deviation from the deterministic O(dt) bias, in standard errors.
        let (dev, se) = mean_se(res.iter().map(|r| r.0 - r.1));
        let z = dev / se;
        passed &= z.abs() <= 3.0;
        means.push(mean_r);
        parts.push(format!("dt {dt:.0e}: mean R {mean_r:.3e}, bias {bias:.3e}, z {z:+.2}"));
    }
    let ratios: Vec<f64> = means.windows(2).map(|w| w[0] / w[1]).collect();
    passed &= ratios.iter().all(|r| (1.6..=2.4).contains(r));
    Outcome::new(
        passed,
        format!(
            "{paths} paths; {}; halving ratios {}",
            parts.join("; "),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c5_ou_variance() -> Outcome {
    let grid = TorusGrid::new(1, 1.0).unwrap();
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).unwrap();
    let mu = 0.8;
    let eps = 0.5;
    let mut cfg = SolverConfig::new(
        OperatorParams::new(mu, 1.0, 5.0).unwrap(),
        q.clone(),
        NoiseMap::identity(&grid),
        1e-3,
        3.0,
    )
    .with_epsilon(eps);
    cfg.linear_only = true;
    let paths = 10_000;
    let spec = EnsembleSpec::new(cfg, SpectralField::zeros(&grid), paths, 23);
    let runs = run_ensemble(&spec, false, true).unwrap();
    let terminal: Vec<Vec<f64>> = runs.into_iter().map(|p| p.terminal.unwrap()).collect();
    let mut worst_z = 0.0f64;
    let mut worst_rel = 0.0f64;
    for j in 0..grid.modal_len() {
        let lam = grid.modal_eigenvalue(j);
        let oracle = eps * q.eigenvalues()[j] / (2.0 * mu * lam);
        let (var, se) = mean_se(terminal.iter().map(|x| x[j] * x[j]));
        worst_z = worst_z.max(((var - oracle) / se).abs());
        worst_rel = worst_rel.max(((var - oracle) / oracle).abs());
    }
    Outcome::new(
        worst_z <= 3.0,
        format!(
            "{paths} paths, {} modal coordinates: worst |z| {worst_z:.2}, worst relative {worst_rel:.2e}",
            grid.modal_len()
        ),
    )
}

fn c6_adjoint() -> Outcome {
    const TOL: f64 = 1e-5;
    let grid = TorusGrid::new(4, 2.0).unwrap();
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).unwrap();
    let diag: Vec<f64> = (0..grid.modal_len()).map(|j| 1.0 / (1.0 + 0.05 * j as f64)).collect();
    let phi = NoiseMap::linear_bounded(diag, 0.8, 0.5);
    let cfg = SolverConfig::new(OperatorParams::new(0.7, 1.0, 3.0).unwrap(), q, phi, 1.0 / 16.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u0 = random_field_with_norm(&grid, 2.0, 0.8, &mut rng);
    let goal = random_field_with_norm(&grid, 2.0, 0.5, &mut rng);
    let mut uniform = |s: f64| -> Vec<Vec<f64>> {
        (0..16)
            .map(|_| {
                (0..grid.modal_len())
                    .map(|_| s * (2.0 * rng.random::<f64>() - 1.0))
                    .collect()
            })
            .collect()
    };
    let h = ControlPath::from_values(cfg.dt, uniform(0.5)).unwrap();
    let directions: Vec<ControlPath> = (0..20)
        .map(|_| ControlPath::from_values(cfg.dt, uniform(1.0)).unwrap())
        .collect();

    let mut worst = 0.0f64;
    let mut checked = 0;
    let targets = [
        Target::TerminalPoint {
            state: goal,
            tolerance: 1e-6,
        },
        Target::ExitBall {
            radius: 1.2,
            tolerance: 1e-4,
        },
    ];
    for target in targets {
        for dynamics in [ActionDynamics::Skeleton, ActionDynamics::ShortTime] {
            let prob = ActionProblem {
                u0: u0.clone(),
                solver: cfg.clone(),
                target: target.clone(),
                dynamics,
                settings: OptimizerSettings::default(),
            };
            let mut pen = PenaltyState::initial(&prob);
            pen.exit_multiplier = 0.3;
            pen.terminal_multiplier = vec![0.1; grid.modal_len()];
            let (_, grad) = adjoint_gradient(&h, &prob, &pen).unwrap();
            for dir in &directions {
                let at = |c: f64| {
                    let vals = h
                        .values()
                        .iter()
                        .zip(dir.values())
                        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + c * y).collect())
                        .collect();
                    adjoint_gradient(&ControlPath::from_values(h.dt(), vals).unwrap(), &prob, &pen)
                        .unwrap()
                        .0
                };
                let step = 1e-5;
                let fd = (at(step) - at(-step)) / (2.0 * step);
                let an: f64 = grad
                    .values()
                    .iter()
                    .zip(dir.values())
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                    .sum();
                worst = worst.max((fd - an).abs() / an.abs());
                checked += 1;
            }
        }
    }
    Outcome::new(
        worst <= TOL,
        format!("{checked} directions over 4 problems, 16 steps: worst relative error {worst:.2e} (tol {TOL:.0e})"),
    )
}

fn c7_short_time_action() -> Outcome {
    let grid = TorusGrid::new(4, 2.0).unwrap();
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).unwrap();
    let cfg = SolverConfig::new(
        OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
        q.clone(),
        NoiseMap::identity(&grid),
        0.0625,
        1.0,
    );
    let u0 = random_field_with_norm(&grid, 1.0, 0.5, &mut ChaCha8Rng::seed_from_u64(1));
    let mut g = vec![0.0; grid.modal_len()];
    g[0] = 0.3;
    g[1] = -0.2;
    g[4] = 0.1;
    let goal = SpectralField::from_modal(&grid, &g);
    // Straight line in the Cameron–Martin geometry: Σ_j (g_j − u0_j)²/μ_j / (2T).
    let oracle: f64 = goal
        .to_modal()
        .iter()
        .zip(u0.to_modal())
        .zip(q.eigenvalues())
        .map(|((a, b), m)| (a - b).powi(2) / m)
        .sum::<f64>()
        / (2.0 * cfg.horizon);
    let prob = ActionProblem {
        u0,
        solver: cfg,
        target: Target::TerminalPoint {
            state: goal,
            tolerance: 1e-6,
        },
        dynamics: ActionDynamics::ShortTime,
        settings: OptimizerSettings::default(),
    };
    let res = minimize_action(&prob).unwrap();
    let rel = (res.action_value - oracle).abs() / oracle;
    let h = &res.optimal_control;
    let n = h.steps() as f64;
    let mean: Vec<f64> = (0..grid.modal_len())
        .map(|j| h.values().iter().map(|v| v[j]).sum::<f64>() / n)
        .collect();
    let mean_norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    let spread = h
        .values()
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / mean_norm)
        .fold(0.0, f64::max);
    Outcome::new(
        res.converged && rel <= 1e-3 && spread <= 1e-3,
        format!(
            "action {:.8} vs oracle {oracle:.8}: relative {rel:.1e}; control deviation from its mean {spread:.1e}; converged {}",
            res.action_value, res.converged
        ),
    )
}

/// `min_j R²μλ_j / (μ_j (1 − e^{−2μλ_jT}))`: minimum energy to steer one
/// Ornstein–Uhlenbeck coordinate from rest to radius `R` by time `T`.
fn linear_rate_oracle(cfg: &SolverConfig, radius: f64) -> f64 {
    let grid = cfg.covariance.grid();
    let mu = cfg.params.mu;
    cfg.covariance
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(j, m)| {
            let lam = grid.modal_eigenvalue(j);
            radius * radius * mu * lam / (m * (1.0 - (-2.0 * mu * lam * cfg.horizon).exp()))
        })
        .fold(f64::INFINITY, f64::min)
}

fn c8_linear_exit_rate() -> Outcome {
    let grid = TorusGrid::new(2, 1.0).unwrap();
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).unwrap();
    let mut cfg = SolverConfig::new(
        OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
        q,
        NoiseMap::identity(&grid),
        0.01,
        1.0,
    );
    cfg.linear_only = true;
    let mut passed = true;
    let mut parts = Vec::new();
    for radius in [0.5, 1.0] {
        let prob = ActionProblem {
            u0: SpectralField::zeros(&grid),
            solver: cfg.clone(),
            target: Target::ExitBall {
                radius,
                tolerance: 1e-4 * radius,
            },
            dynamics: ActionDynamics::Skeleton,
            settings: OptimizerSettings::default(),
        };
        let res = rate_of_set(&prob).unwrap();
        let oracle = linear_rate_oracle(&cfg, radius);
        let rel = (res.action_value - oracle).abs() / oracle;
        passed &= res.converged && rel <= 0.05;
        parts.push(format!(
            "R={radius}: {:.5} vs {oracle:.5} ({:.2}%)",
            res.action_value,
            100.0 * rel
        ));
    }
    Outcome::new(passed, format!("{} (tol 5%)", parts.join(", ")))
}

fn c9_tail_bounds() -> Outcome {
    struct Case {
        name: &'static str,
        grid: TorusGrid,
        q: fn(&TorusGrid) -> CovarianceSpec,
        linear: bool,
        epsilon: f64,
        u0_norm: f64,
        radii: Vec<f64>,
    }
    let cases = [
        Case {
            name: "nonlinear N=3",
            grid: TorusGrid::new(3, 2.0).unwrap(),
            q: |g| CovarianceSpec::power_law(g, 2.0, 0.0).unwrap(),
            linear: false,
            epsilon: 0.05,
            u0_norm: 0.5,
            radii: vec![0.75, 1.0, 1.25, 1.5, 2.0],
        },
        Case {
            name: "nonlinear N=4",
            grid: TorusGrid::new(4, 2.0).unwrap(),
            q: |g| CovarianceSpec::power_law(g, 2.0, 0.0).unwrap(),
            linear: false,
            epsilon: 0.02,
            u0_norm: 0.8,
            radii: vec![0.9, 1.0, 1.25, 1.5],
        },
        Case {
            name: "linear single wavevector",
            grid: TorusGrid::new(1, 1.0).unwrap(),
            q: |g| {
                let mut e = vec![0.0; g.modal_len()];
                e[0] = 1.0;
                e[1] = 1.0;
                CovarianceSpec::from_eigenvalues(g, e).unwrap()
            },
            linear: true,
            epsilon: 0.3,
            u0_norm: 0.25,
            radii: vec![0.5, 0.75, 1.0, 1.5],
        },
    ];
    let mut informative = 0;
    let mut violations = 0;
    let mut hits_below_one = 0;
    let mut min_slack = f64::INFINITY;
    let mut parts = Vec::new();
    for (i, c) in cases.into_iter().enumerate() {
        let mut cfg = SolverConfig::new(
            OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
            (c.q)(&c.grid),
            NoiseMap::identity(&c.grid),
            0.01,
            0.5,
        )
        .with_epsilon(c.epsilon);
        cfg.linear_only = c.linear;
        let u0 = random_field_with_norm(&c.grid, 1.0, c.u0_norm, &mut ChaCha8Rng::seed_from_u64(i as u64));
        let spec = EnsembleSpec::new(cfg, u0, 10_000, 31 + i as u64);
        let paths = run_ensemble(&spec, true, false).unwrap();
        let mut reports = exit_bound_reports(&spec, &paths, &c.radii).unwrap();
        reports.extend(deviation_bound_reports(&spec, &paths, &c.radii).unwrap());
        let mut case_informative = 0;
        for r in &reports {
            if r.verdict == Verdict::Vacuous {
                continue;
            }
            case_informative += 1;
            min_slack = min_slack.min(r.slack);
            hits_below_one += usize::from(r.estimate.hits > 0);
            violations += usize::from(r.verdict == Verdict::Violated);
        }
        informative += case_informative;
        parts.push(format!("{}: {case_informative}/{} informative", c.name, reports.len()));
    }
    Outcome::new(
        violations == 0 && informative > 0,
        format!(
            "{}; {violations} violations in {informative} checks with bound < 1 ({hits_below_one} with hits), min slack {min_slack:.3}",
            parts.join(", ")
        ),
    )
}

fn curve_summary(c: &ScalingCurve) -> String {
    c.rows
        .iter()
        .map(|r| format!("eps {:.3}: {:.3} ({} hits)", r.epsilon, r.value, r.estimate.hits))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Distances to `reference` over resolved levels, largest `ε` first, are
/// non-increasing; returns that flag and the relative error at the last
/// resolved level.
fn trend(c: &ScalingCurve, reference: f64) -> (bool, f64) {
    let resolved: Vec<f64> = c.rows.iter().filter(|r| !r.underresolved).map(|r| r.value).collect();
    let monotone = resolved.len() >= 2
        && resolved
            .windows(2)
            .all(|w| (w[1] - reference).abs() <= (w[0] - reference).abs());
    let last = resolved
        .last()
        .map_or(f64::INFINITY, |v| (v - reference).abs() / reference);
    (monotone, last)
}

fn c10_ldp_trend() -> Outcome {
    // Linear system, one driven wavevector: the rate is closed form.
    let g1 = TorusGrid::new(1, 1.0).unwrap();
    let mut e = vec![0.0; g1.modal_len()];
    e[0] = 1.0;
    e[1] = 1.0;
    let q = CovarianceSpec::from_eigenvalues(&g1, e).unwrap();
    let mut lin = SolverConfig::new(
        OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
        q,
        NoiseMap::identity(&g1),
        0.01,
        0.5,
    );
    lin.linear_only = true;
    let j_lin = linear_rate_oracle(&lin, 1.0);
    let mut spec = EnsembleSpec::new(lin, SpectralField::zeros(&g1), 100_000, 5);
    spec.epsilons = vec![0.8, 0.4, 0.2];
    let curve = ldp_scaling_curve(&spec, 1.0, Some(j_lin)).unwrap();
    let (lin_mono, lin_err) = trend(&curve, j_lin);
    let lin_ok = lin_mono && lin_err <= 0.2;

    // Full nonlinear system against the minimal action of leaving the ball.
    let g4 = TorusGrid::new(4, 2.0).unwrap();
    let q4 = CovarianceSpec::power_law(&g4, 2.0, 0.0).unwrap();
    let cfg = SolverConfig::new(
        OperatorParams::new(1.0, 1.0, 3.0).unwrap(),
        q4,
        NoiseMap::identity(&g4),
        0.01,
        0.5,
    );
    let prob = ActionProblem {
        u0: SpectralField::zeros(&g4),
        solver: cfg.clone(),
        target: Target::ExitBall {
            radius: 1.0,
            tolerance: 1e-4,
        },
        dynamics: ActionDynamics::Skeleton,
        settings: OptimizerSettings::default(),
    };
    let action = rate_of_set(&prob).unwrap();
    let j = action.action_value;
    let mut spec = EnsembleSpec::new(cfg, SpectralField::zeros(&g4), 4000, 11);
    spec.epsilons = vec![j / 1.25, j / 2.5, j / 5.0];
    let nl = ldp_scaling_curve(&spec, 1.0, Some(j)).unwrap();
    let (nl_mono, _) = trend(&nl, j);

    Outcome::new(
        lin_ok && nl_mono && action.converged,
        format!(
            "linear J {j_lin:.4}: {}, monotone {lin_mono}, final error {:.1}% (tol 20%) | nonlinear N=4 J {j:.4}: {}, monotone {nl_mono}",
            curve_summary(&curve),
            100.0 * lin_err,
            curve_summary(&nl)
        ),
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn scbf(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_scbf")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn c11_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let studies = [
        (
            "simulate",
            "seed = 3\n[grid]\nmodes_N = 3\n[noise]\nepsilon = 0.05\n[solver]\ndt = 0.01\nhorizon_T = 0.2\n\
             [initial]\nkind = \"random\"\nh_norm = 1.0\n[simulate]\npaths = 24\nthresholds = [1.0]\nwrite_paths = 2\n",
        ),
        (
            "rare-event",
            "seed = 4\n[grid]\nmodes_N = 2\n[noise]\nepsilon = 0.2\nepsilons = [0.4, 0.2]\n[solver]\ndt = 0.01\nhorizon_T = 0.3\n\
             [rare_event]\nn_paths = 1500\nradii = [0.5, 1.0]\n[rare_event.ldp]\nradius = 0.5\nreference = \"none\"\n",
        ),
        (
            "short-time",
            "seed = 5\n[grid]\nmodes_N = 2\n[noise]\nepsilons = [0.4, 0.2]\n[solver]\ndt = 0.02\nhorizon_T = 0.5\n\
             [short_time]\nn_paths = 1500\ndelta = 0.3\ntarget = { kind = \"mode\", index = 0, amplitude = 0.2 }\n",
        ),
        ("verify-ops", "seed = 6\n[verify_ops]\nsamples = 50\npairs = 200\n"),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (study, body) in studies {
        let cfg = write_config(dir, &format!("{study}.toml"), body);
        let cfg = cfg.to_str().unwrap();
        let a = dir.join(format!("{study}-t1"));
        let b = dir.join(format!("{study}-t3"));
        let c = dir.join(format!("{study}-replay"));
        let runs = [
            scbf(&["--config", cfg, "--threads", "1", "--out", a.to_str().unwrap(), study]),
            scbf(&["--config", cfg, "--threads", "3", "--out", b.to_str().unwrap(), study]),
            scbf(&[
                "replay",
                "--manifest",
                a.join("manifest.json").to_str().unwrap(),
                "--threads",
                "2",
                "--out",
                c.to_str().unwrap(),
            ]),
        ];
        if let Some((code, err)) = runs.iter().find(|r| r.0 != 0) {
            mismatches.push(format!("{study} exited {code}: {}", err.trim()));
            continue;
        }
        let reference = csv_files(&a);
        for other in [&b, &c] {
            let files = csv_files(other);
            if files.len() != reference.len() {
                mismatches.push(format!("{study}: file sets differ"));
            }
            for ((n1, d1), (n2, d2)) in reference.iter().zip(&files) {
                compared += 1;
                if n1 != n2 || d1 != d2 {
                    mismatches.push(format!("{study}/{n1}"));
                }
            }
        }
    }
    Outcome::new(
        mismatches.is_empty() && compared > 0,
        if mismatches.is_empty() {
            format!("{compared} CSV comparisons (threads 1 vs 3 vs replay at 2) bit-identical across 4 studies")
        } else {
            format!("mismatches: {}", mismatches.join(", "))
        },
    )
}

#[test]
fn acceptance_criteria() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 11] = [
        ("operator identities", c1_operator_identities),
        ("monotonicity", c2_monotonicity),
        ("deterministic energy equality", c3_energy_equality),
        ("Ito energy identity", c4_ito_energy),
        ("Ornstein-Uhlenbeck variance", c5_ou_variance),
        ("adjoint gradient", c6_adjoint),
        ("short-time action", c7_short_time_action),
        ("linear exit rate", c8_linear_exit_rate),
        ("exponential tail bounds", c9_tail_bounds),
        ("LDP trend", c10_ldp_trend),
        ("reproducibility", c11_reproducibility),
    ];
    let mut failed = Vec::new();
    // The harness prints the test name without a newline.
    std::io::stdout().write_all(b"\n").unwrap();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let verdict = if out.passed { "PASS" } else { "FAIL" };
        let line = format!(
            "[{verdict}] criterion {:>2} {name} ({:.1}s): {}\n",
            i + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
        // Written past the test harness capture so the ledger is always shown.
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(line.as_bytes()).unwrap();
        stdout.flush().unwrap();
        if !out.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
