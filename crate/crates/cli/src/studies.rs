use std::path::Path;

use rayon::prelude::*;
use scbf_core::action::{
    forward_map, linear_exit_rate, minimize_action, rate_of_set, short_time_rate, ActionDynamics, ActionError,
    ActionProblem, ActionResult, Target,
};
use scbf_core::noise::{trajectory_rng, ControlPath};
use scbf_core::rare_event::{
    deviation_bound_reports, exit_bound_reports, exit_probability_of, ldp_scaling_curve, run_ensemble,
    short_time_scaling, BoundReport, EnsembleSpec, ScalingCurve, Verdict,
};
use scbf_core::solver::{integrate_skeleton, run_path, skeleton_bound, Dynamics, Forcing, SolverConfig};
use scbf_core::spectral::write_field;
use scbf_core::verify::{verify_ops as run_verify, VerifySettings};
use scbf_core::SpectralField;
use serde::Serialize;
use serde_json::json;

use crate::config::{ActionDynamicsChoice, ControlSpec, ExperimentConfig, ReferenceRate, TargetSpec};
use crate::output::num;
use crate::{Artifacts, CliError, Finding};

fn missing(block: &str) -> CliError {
    CliError::Config(format!("missing [{block}] block"))
}

fn action_err(e: ActionError) -> CliError {
    match e {
        ActionError::Solver(s) => s.into(),
        ActionError::Config(_) | ActionError::NonDifferentiableTarget => CliError::Config(e.to_string()),
        ActionError::InfeasibleTarget { .. } | ActionError::NotConverged { .. } => CliError::Failed(e.to_string()),
    }
}

pub fn verify_ops(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Finding, CliError> {
    let block = cfg.verify_ops.clone().unwrap_or_default();
    let settings = VerifySettings {
        modes: cfg.grid.modes,
        samples: block.samples,
        pairs: block.pairs,
        seed: cfg.seed,
        fault: block.fault,
        ..Default::default()
    };
    let report = run_verify(&settings);
    art.csv(
        "checks.csv",
        &["name", "passed", "worst", "tolerance", "samples"],
        report.checks.iter().map(|c| {
            vec![
                c.name.clone(),
                c.passed.to_string(),
                num(c.worst),
                num(c.tolerance),
                c.samples.to_string(),
            ]
        }),
    )?;
    if let Some(study) = &report.refinement {
        art.csv(
            "refinement.csv",
            &["dt", "relative_residual"],
            study
                .dts
                .iter()
                .zip(&study.relative_residuals)
                .map(|(d, r)| vec![num(*d), num(*r)]),
        )?;
    }
    art.json(
        "summary.json",
        &json!({ "failures": report.failures(), "report": report }),
    )?;
    Ok(if report.failures() == 0 {
        Finding::Ok
    } else {
        Finding::VerificationFailed
    })
}

pub fn simulate(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Finding, CliError> {
    let block = cfg.simulate.clone().unwrap_or_default();
    if block.paths == 0 {
        return Err(CliError::Config("simulate.paths must be at least 1".into()));
    }
    let mut solver = cfg.solver_config()?;
    solver.thresholds = block.thresholds.clone();
    solver.validate()?;
    let dynamics: Dynamics = block.dynamics.into();
    if dynamics == Dynamics::ShortTime && !(solver.epsilon > 0.0 && solver.epsilon <= 1.0) {
        return Err(CliError::Config(
            "short-time dynamics need noise.epsilon in (0, 1]".into(),
        ));
    }
    let grid = cfg.grid()?;
    let u0 = cfg.initial.build(&grid, base)?;
    let seed = cfg.seed;
    let results: Vec<_> = (0..block.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            run_path(&u0, &solver, dynamics, &Forcing::None, None, Some(&mut rng), true, None)
        })
        .collect();

    let mut header = vec![
        "path".to_string(),
        "sup_h_norm".into(),
        "final_h_norm_sq".into(),
        "residual".into(),
        "drift_defect".into(),
        "blew_up".into(),
    ];
    header.extend((0..block.thresholds.len()).map(|i| format!("exit_time_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    let (mut sum, mut sum_sq, mut defect, mut ok, mut warnings) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (i, r) in results.iter().enumerate() {
        let mut row = vec![i.to_string()];
        match r {
            Ok(tr) => {
                let last = tr.ledger.last().copied().unwrap_or_default();
                row.extend([
                    num(tr.sup_h_norm()),
                    num(last.h_norm_sq),
                    num(last.residual),
                    num(last.drift_defect),
                    "0".into(),
                ]);
                row.extend(tr.exit_times.iter().map(|t| t.map(num).unwrap_or_default()));
                sum += last.residual;
                sum_sq += last.residual * last.residual;
                defect += last.drift_defect;
                ok += 1;
                warnings += tr.warnings.len();
            }
            Err(_) => {
                row.extend(["inf".into(), String::new(), String::new(), String::new(), "1".into()]);
                row.extend(block.thresholds.iter().map(|_| String::new()));
            }
        }
        rows.push(row);
    }
    art.csv("paths.csv", &header, rows)?;
    for (i, r) in results.iter().enumerate().take(block.write_paths) {
        if let Ok(tr) = r {
            art.with_writer(&format!("trajectory_{i}.csv"), |w| tr.write_csv(w))?;
            art.with_writer(&format!("final_state_{i}.txt"), |w| write_field(tr.final_state(), w))?;
        }
    }
    let n = ok.max(1) as f64;
    let mean = sum / n;
    let se = if ok > 1 {
        ((sum_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    art.json(
        "summary.json",
        &json!({
            "paths": block.paths,
            "completed": ok,
            "blew_up": block.paths - ok,
            "mean_residual": mean,
            "residual_standard_error": se,
            "mean_drift_defect": defect / n,
            "warnings": warnings,
        }),
    )?;
    Ok(Finding::Ok)
}

fn build_control(
    spec: &ControlSpec,
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    base: &Path,
) -> Result<ControlPath, CliError> {
    let grid = cfg.grid()?;
    let steps = solver.steps()?;
    Ok(match spec {
        ControlSpec::Zero => ControlPath::zeros(&grid, steps, solver.dt),
        ControlSpec::Constant { field } => {
            ControlPath::constant(steps, solver.dt, field.build(&grid, base)?.to_modal())
        }
        ControlSpec::File { path } => {
            let p = base.join(path);
            let f = std::fs::File::open(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let h = ControlPath::read_csv(std::io::BufReader::new(f), solver.dt, grid.modal_len())?;
            if h.steps() != steps {
                return Err(CliError::Config(format!(
                    "{}: control has {} steps, solver expects {steps}",
                    p.display(),
                    h.steps()
                )));
            }
            h
        }
    })
}

pub fn skeleton(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Finding, CliError> {
    let block = cfg.skeleton.clone().unwrap_or_default();
    let mut solver = cfg.solver_config()?;
    solver.epsilon = 0.0;
    let grid = cfg.grid()?;
    let u0 = cfg.initial.build(&grid, base)?;
    let h = build_control(&block.control, cfg, &solver, base)?;
    let tr = integrate_skeleton(&u0, &h, &solver, block.budget)?;
    art.with_writer("trajectory.csv", |w| tr.write_csv(w))?;
    art.with_writer("control.csv", |w| h.write_csv(w))?;
    art.with_writer("final_state.txt", |w| write_field(tr.final_state(), w))?;
    let action = h.action(&solver.covariance);
    let bound = block.budget.map(|m| skeleton_bound(&u0, &solver, m));
    let functional = tr.energy_functional();
    art.json(
        "summary.json",
        &json!({
            "action": action,
            "energy_functional": functional,
            "a_priori_bound": bound,
            "within_bound": bound.map(|b| functional <= b),
            "sup_h_norm": tr.sup_h_norm(),
            "residual": tr.residual(),
            "warnings": tr.warnings,
        }),
    )?;
    Ok(Finding::Ok)
}

#[derive(Serialize)]
struct ActionRow {
    radius: Option<f64>,
    #[serde(flatten)]
    result: ActionResult,
    oracle: Option<f64>,
}

pub fn action(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Finding, CliError> {
    let block = cfg.action.clone().ok_or_else(|| missing("action"))?;
    let mut solver = cfg.solver_config()?;
    solver.epsilon = 0.0;
    let grid = cfg.grid()?;
    let u0 = cfg.initial.build(&grid, base)?;
    let dynamics = match block.dynamics {
        ActionDynamicsChoice::Skeleton => ActionDynamics::Skeleton,
        ActionDynamicsChoice::ShortTime => ActionDynamics::ShortTime,
    };
    let settings = block.optimizer.settings(cfg.seed);
    let additive = solver.noise.is_additive();
    let problem = |target| ActionProblem {
        u0: u0.clone(),
        solver: solver.clone(),
        target,
        dynamics,
        settings: settings.clone(),
    };

    let mut rows = Vec::new();
    let mut problems = Vec::new();
    match &block.target {
        TargetSpec::Terminal { state, tolerance } => {
            let g = state.build(&grid, base)?;
            let oracle = (dynamics == ActionDynamics::ShortTime && additive).then(|| short_time_rate(&solver, &u0, &g));
            let prob = problem(Target::TerminalPoint {
                state: g,
                tolerance: *tolerance,
            });
            let res = minimize_action(&prob);
            rows.push((None, res, oracle));
            problems.push(prob);
        }
        TargetSpec::ExitBall {
            radii,
            relative_tolerance,
        } => {
            if radii.is_empty() {
                return Err(CliError::Config("action.target.radii is empty".into()));
            }
            let linear_oracle = dynamics == ActionDynamics::Skeleton && solver.linear_only && additive && u0.is_zero();
            for &r in radii {
                let prob = problem(Target::ExitBall {
                    radius: r,
                    tolerance: relative_tolerance * r,
                });
                let res = rate_of_set(&prob);
                rows.push((Some(r), res, linear_oracle.then(|| linear_exit_rate(&solver, r))));
                problems.push(prob);
            }
        }
    }

    let mut finding = Finding::Ok;
    let mut table = Vec::new();
    let mut records = Vec::new();
    for (i, ((radius, res, oracle), prob)) in rows.into_iter().zip(&problems).enumerate() {
        let res = match res {
            Ok(r) => r,
            Err(e @ (ActionError::InfeasibleTarget { .. } | ActionError::NotConverged { .. })) => {
                finding = Finding::NotConverged;
                table.push(vec![
                    radius.map(num).unwrap_or_default(),
                    "NaN".into(),
                    "false".into(),
                    "NaN".into(),
                    "0".into(),
                    "NaN".into(),
                    oracle.map(num).unwrap_or_default(),
                ]);
                records.push(json!({ "radius": radius, "error": e.to_string(), "oracle": oracle }));
                continue;
            }
            Err(e) => return Err(action_err(e)),
        };
        if !res.converged {
            finding = Finding::NotConverged;
        }
        let suffix = if problems.len() > 1 {
            format!("_{i}")
        } else {
            String::new()
        };
        art.with_writer(&format!("control{suffix}.csv"), |w| res.optimal_control.write_csv(w))?;
        let tr = forward_map(&res.optimal_control, prob).map_err(action_err)?;
        art.with_writer(&format!("trajectory{suffix}.csv"), |w| tr.write_csv(w))?;
        table.push(vec![
            radius.map(num).unwrap_or_default(),
            num(res.action_value),
            res.converged.to_string(),
            num(res.constraint_violation),
            res.iterations.to_string(),
            num(res.spread),
            oracle.map(num).unwrap_or_default(),
        ]);
        records.push(
            serde_json::to_value(ActionRow {
                radius,
                result: res,
                oracle,
            })
            .expect("serialisable"),
        );
    }
    art.csv(
        "actions.csv",
        &[
            "radius",
            "action_value",
            "converged",
            "constraint_violation",
            "iterations",
            "spread",
            "oracle",
        ],
        table,
    )?;
    art.json("summary.json", &json!({ "finding": finding, "results": records }))?;
    Ok(finding)
}

fn ensemble(cfg: &ExperimentConfig, base: &Path, n_paths: usize, confidence: f64) -> Result<EnsembleSpec, CliError> {
    let solver = cfg.solver_config()?;
    let grid = cfg.grid()?;
    let u0 = cfg.initial.build(&grid, base)?;
    let mut spec = EnsembleSpec::new(solver, u0, n_paths, cfg.seed);
    spec.epsilons = cfg.noise.epsilons.clone();
    spec.confidence = confidence;
    Ok(spec)
}

fn bound_rows(kind: &str, reports: &[BoundReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|b| {
            vec![
                kind.to_string(),
                num(b.radius),
                b.estimate.hits.to_string(),
                b.estimate.n.to_string(),
                num(b.estimate.p_hat),
                num(b.estimate.ci_high),
                num(b.bound),
                num(b.slack),
                format!("{:?}", b.verdict),
            ]
        })
        .collect()
}

fn scaling_table(art: &mut Artifacts, curve: &ScalingCurve, plot: bool) -> Result<(), CliError> {
    art.csv(
        "scaling.csv",
        &[
            "epsilon",
            "hits",
            "n",
            "p_hat",
            "ci_low",
            "ci_high",
            "value",
            "band_low",
            "band_high",
            "underresolved",
        ],
        curve.rows.iter().map(|r| {
            vec![
                num(r.epsilon),
                r.estimate.hits.to_string(),
                r.estimate.n.to_string(),
                num(r.estimate.p_hat),
                num(r.estimate.ci_low),
                num(r.estimate.ci_high),
                num(r.value),
                num(r.band_low),
                num(r.band_high),
                r.underresolved.to_string(),
            ]
        }),
    )?;
    if plot {
        let reference = curve
            .reference
            .map(|j| format!(", {j:?} title 'reference rate' with lines dt 2"))
            .unwrap_or_default();
        art.text(
            "scaling.gp",
            &format!(
                "set datafile separator ','\nset logscale x\nset xlabel 'epsilon'\nset ylabel '-speed log p'\n\
                 plot 'scaling.csv' every ::1 using 1:7:8:9 with yerrorbars title 'estimate'{reference}\n"
            ),
        )?;
    }
    Ok(())
}

pub fn rare_event(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Finding, CliError> {
    let block = cfg.rare_event.clone().ok_or_else(|| missing("rare_event"))?;
    let mut spec = ensemble(cfg, base, block.n_paths, block.confidence)?;
    spec.thresholds = block.radii.clone();
    let mut finding = Finding::Ok;
    let mut summary = serde_json::Map::new();

    if !block.radii.is_empty() {
        let paths = run_ensemble(&spec, block.check_bounds, false)?;
        art.csv(
            "exit_probabilities.csv",
            &["radius", "hits", "n", "p_hat", "ci_low", "ci_high"],
            block.radii.iter().map(|&r| {
                let e = exit_probability_of(&paths, r, spec.confidence);
                vec![
                    num(r),
                    e.hits.to_string(),
                    e.n.to_string(),
                    num(e.p_hat),
                    num(e.ci_low),
                    num(e.ci_high),
                ]
            }),
        )?;
        summary.insert("blew_up".into(), json!(paths.iter().filter(|p| p.blew_up).count()));
        if block.check_bounds {
            let exit = exit_bound_reports(&spec, &paths, &block.radii)?;
            let dev = deviation_bound_reports(&spec, &paths, &block.radii)?;
            if exit.iter().chain(&dev).any(|b| b.verdict == Verdict::Violated) {
                finding = Finding::BoundViolated;
            }
            let mut rows = bound_rows("exit", &exit);
            rows.extend(bound_rows("deviation", &dev));
            art.csv(
                "bounds.csv",
                &[
                    "kind", "radius", "hits", "n", "p_hat", "ci_high", "bound", "slack", "verdict",
                ],
                rows,
            )?;
            summary.insert("exit_bounds".into(), json!(exit));
            summary.insert("deviation_bounds".into(), json!(dev));
        }
    }

    if let Some(ldp) = &block.ldp {
        let reference = match ldp.reference {
            ReferenceRate::None => None,
            ReferenceRate::Linear => Some(linear_exit_rate(&spec.solver, ldp.radius)),
            ReferenceRate::Action => {
                let mut solver = spec.solver.clone();
                solver.epsilon = 0.0;
                let prob = ActionProblem {
                    u0: spec.u0.clone(),
                    solver,
                    target: Target::ExitBall {
                        radius: ldp.radius,
                        tolerance: 1e-4 * ldp.radius,
                    },
                    dynamics: ActionDynamics::Skeleton,
                    settings: scbf_core::action::OptimizerSettings {
                        seed: cfg.seed,
                        ..Default::default()
                    },
                };
                let res = rate_of_set(&prob).map_err(action_err)?;
                if !res.converged {
                    finding = Finding::NotConverged;
                }
                Some(res.action_value)
            }
        };
        let curve = ldp_scaling_curve(&spec, ldp.radius, reference)?;
        scaling_table(art, &curve, cfg.output.plot_scripts)?;
        summary.insert("ldp".into(), json!(curve));
    }
    summary.insert("finding".into(), json!(finding));
    art.json("summary.json", &summary)?;
    Ok(finding)
}

pub fn short_time(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Finding, CliError> {
    let block = cfg.short_time.clone().ok_or_else(|| missing("short_time"))?;
    let mut spec = ensemble(cfg, base, block.n_paths, block.confidence)?;
    spec.dynamics = Dynamics::ShortTime;
    let g: SpectralField = block.target.build(spec.u0.grid(), base)?;
    let reference = short_time_rate(&spec.solver, &spec.u0, &g);
    let curve = short_time_scaling(&spec, &g, block.delta, Some(reference))?;
    scaling_table(art, &curve, cfg.output.plot_scripts)?;
    art.json("summary.json", &json!({ "reference_rate": reference, "curve": curve }))?;
    Ok(Finding::Ok)
}
