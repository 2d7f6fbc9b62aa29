//! Built-in property suite: operator identities, damping inequalities,
//! monotonicity, noise hypothesis certificates and solver energy-residual
//! convergence. Failures are report content, never panics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::noise::{trajectory_rng, ControlPath, CovarianceSpec, NoiseMap};
use crate::solver::{integrate_deterministic, integrate_stochastic, Forcing, SolverConfig};
use crate::spectral::{
    abs_pow, advection, advection_bilinear, forchheimer, fractional_power_apply, leray_project, lp_norm,
    physical_values, quadrature_h_norm_sq, random_field_with_norm, stokes_apply, trilinear_form, weighted_h_norm_sq,
    OperatorParams, SpectralError, SpectralField, TorusGrid, Workspace,
};

/// Deliberate defects used to check that the suite can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// Evaluates the damping term as `−C` in the damping checks.
    FlipForchheimerSign,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySettings {
    /// Truncation `N` of the test grid.
    pub modes: usize,
    /// Random fields per identity check.
    pub samples: usize,
    /// Random pairs per monotonicity check.
    pub pairs: usize,
    pub seed: u64,
    pub fault: Fault,
    /// Time steps of the energy-residual refinement study.
    pub refinement_dts: Vec<f64>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            modes: 4,
            samples: 1000,
            pairs: 10_000,
            seed: 0,
            fault: Fault::None,
            refinement_dts: vec![4e-3, 2e-3, 1e-3],
        }
    }
}

/// One invariant: `worst` is the largest normalised defect seen and the check
/// passes when `worst ≤ tolerance`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementStudy {
    pub dts: Vec<f64>,
    /// `|R(T)|/‖u0‖_H²` per level.
    pub relative_residuals: Vec<f64>,
    /// Smallest `log₂` ratio between successive levels.
    pub observed_order: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
    pub refinement: Option<RefinementStudy>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    worst: f64,
    tolerance: f64,
    samples: usize,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            worst: 0.0,
            tolerance,
            samples: 0,
        }
    }

    fn record(&mut self, defect: f64) {
        self.samples += 1;
        // NaN must fail
        if !(defect <= self.worst) {
            self.worst = if defect.is_nan() { f64::INFINITY } else { defect };
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name.to_string(),
            passed: self.worst <= self.tolerance,
            worst: self.worst,
            tolerance: self.tolerance,
            samples: self.samples,
        }
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Random field with `‖u‖_H` log-uniform in `[0.1, 10]`.
fn sample<R: Rng>(grid: &TorusGrid, rng: &mut R) -> SpectralField {
    let norm = 10f64.powf(rng.random_range(-1.0..1.0));
    let decay = rng.random_range(0.0..2.0);
    random_field_with_norm(grid, decay, norm, rng)
}

fn damping(u: &SpectralField, p: &OperatorParams, fault: Fault) -> Result<SpectralField, SpectralError> {
    let c = forchheimer(u, p)?;
    Ok(match fault {
        Fault::None => c,
        Fault::FlipForchheimerSign => c.scaled(-1.0),
    })
}

/// `(‖f(u) − f(v)‖_{L^{(r+1)/r}}, ‖u‖_{r+1}, ‖v‖_{r+1}, ‖u−v‖_{r+1})` for
/// the pointwise map `f(u) = |u|^{r−1}u`.
fn lipschitz_terms(u: &SpectralField, v: &SpectralField, r: f64) -> [f64; 4] {
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let pv = physical_values(&mut ws, v);
    let area = ws.cell_area();
    let q = (r + 1.0) / r;
    let (mut sd, mut su, mut sv, mut sw) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in pu.iter().zip(&pv) {
        let fa = *a * abs_pow(a.norm_sqr(), r - 1.0);
        let fb = *b * abs_pow(b.norm_sqr(), r - 1.0);
        sd += abs_pow((fa - fb).norm_sqr(), q);
        su += abs_pow(a.norm_sqr(), r + 1.0);
        sv += abs_pow(b.norm_sqr(), r + 1.0);
        sw += abs_pow((a - b).norm_sqr(), r + 1.0);
    }
    let p = r + 1.0;
    [
        (sd * area).powf(1.0 / q),
        (su * area).powf(1.0 / p),
        (sv * area).powf(1.0 / p),
        (sw * area).powf(1.0 / p),
    ]
}

fn spectral_checks(s: &VerifySettings, out: &mut Vec<CheckOutcome>) -> Result<(), SpectralError> {
    // padding 3 is alias-free for r = 5
    let grid = TorusGrid::new(s.modes, 3.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let exps = [3.0, 5.0];
    let params3 = OperatorParams::new(1.0, 0.5, 3.0)?;
    let params5 = OperatorParams::new(1.0, 1.0, 5.0)?;

    let mut div = Tracker::new("incompressibility", 1e-12);
    let mut parseval = Tracker::new("parseval", 1e-12);
    let mut orth = Tracker::new("advection_orthogonality", 1e-11);
    let mut skew = Tracker::new("trilinear_skew_symmetry", 1e-11);
    let mut stokes = Tracker::new("stokes_energy", 1e-11);
    let mut damp = Tracker::new("damping_energy", 1e-11);
    let mut lip = Tracker::new("damping_local_lipschitz", 1e-12);
    let mut strong = Tracker::new("strong_damping_inequality", 1e-12);
    for _ in 0..s.samples {
        let u = sample(&grid, &mut rng);
        let v = sample(&grid, &mut rng);
        let w = sample(&grid, &mut rng);
        let vn = u.v_norm_sq().sqrt();

        let bu = advection(&u)?;
        let buv = advection_bilinear(&u, &v)?;
        let au = stokes_apply(&u);
        let frac = fractional_power_apply(&u, 0.5);
        let proj = leray_project(&(&u + &v));
        for f in [&bu, &buv, &au, &frac, &proj] {
            div.record(f.divergence_defect() / f.v_norm_sq().sqrt().max(vn).max(f64::MIN_POSITIVE));
        }
        parseval.record(rel(quadrature_h_norm_sq(&u), u.h_norm_sq(), u.h_norm_sq()));
        orth.record(bu.inner(&u).abs() / (bu.h_norm() * u.h_norm()).max(f64::MIN_POSITIVE));
        let b1 = trilinear_form(&u, &v, &w)?;
        let b2 = trilinear_form(&u, &w, &v)?;
        skew.record((b1 + b2).abs() / (b1.abs() + b2.abs()).max(f64::MIN_POSITIVE));
        stokes.record(rel(au.inner(&u), u.v_norm_sq(), u.v_norm_sq()));

        for (params, &r) in [&params3, &params5].into_iter().zip(&exps) {
            let cu = damping(&u, params, s.fault)?;
            let lr = lp_norm(&u, r + 1.0).powf(r + 1.0);
            damp.record(rel(cu.inner(&u), lr, lr));

            let [dc, nu, nv, nw] = lipschitz_terms(&u, &v, r);
            let bound = r * (nu + nv).powf(r - 1.0) * nw;
            lip.record(((dc - bound) / bound.max(f64::MIN_POSITIVE)).max(0.0));

            let d = &u - &v;
            let lhs = lp_norm(&d, r + 1.0).powf(r + 1.0);
            let rhs = 2f64.powf(r - 2.0) * (weighted_h_norm_sq(&u, &d, r)? + weighted_h_norm_sq(&v, &d, r)?);
            strong.record(((lhs - rhs) / rhs.max(f64::MIN_POSITIVE)).max(0.0));
        }
    }
    out.extend([div, parseval, orth, skew, stokes, damp, lip, strong].map(Tracker::finish));

    for (name, params) in [("monotonicity_r3", params3), ("monotonicity_r5", params5)] {
        let mut t = Tracker::new(name, 1e-10);
        for _ in 0..s.pairs {
            let u = sample(&grid, &mut rng);
            let v = sample(&grid, &mut rng);
            let w = &u - &v;
            let linear = params.mu * w.v_norm_sq();
            let adv = (&advection(&u)? - &advection(&v)?).inner(&w);
            let dmp = params.beta * (&damping(&u, &params, s.fault)? - &damping(&v, &params, s.fault)?).inner(&w);
            let shift = params.eta() * w.h_norm_sq();
            let gap = linear + adv + dmp + shift;
            let scale = linear + adv.abs() + dmp.abs() + shift;
            t.record((-gap / scale.max(f64::MIN_POSITIVE)).max(0.0));
        }
        out.push(t.finish());
    }

    let eta = OperatorParams::new(1.0, 1.0, 5.0)?.eta();
    out.push(CheckOutcome {
        name: "monotonicity_shift_r5".into(),
        passed: eta == 0.125,
        worst: (eta - 0.125).abs(),
        tolerance: 0.0,
        samples: 1,
    });
    Ok(())
}

fn noise_checks(s: &VerifySettings, out: &mut Vec<CheckOutcome>) -> Result<(), SpectralError> {
    let grid = TorusGrid::new(s.modes, 2.0)?;
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).map_err(|e| SpectralError::Config(e.to_string()))?;
    let n = grid.modal_len();
    let diag: Vec<f64> = (0..n).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let maps = [
        NoiseMap::identity(&grid),
        NoiseMap::additive(diag.clone()),
        NoiseMap::linear_bounded(diag.clone(), 0.5, 1.0),
        NoiseMap::linear_bounded(diag, -0.3, 2.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed);
    let mut growth = Tracker::new("noise_growth_certificate", 1e-12);
    let mut lipschitz = Tracker::new("noise_lipschitz_certificate", 1e-12);
    for _ in 0..10_000 {
        let u = sample(&grid, &mut rng);
        let v = if rng.random_bool(0.5) {
            sample(&grid, &mut rng)
        } else {
            // nearby pairs probe the steepest part of the saturation
            &u + &random_field_with_norm(&grid, 1.0, 1e-3, &mut rng)
        };
        for phi in &maps {
            let k = phi.growth_constant(&q);
            let lhs = phi.hs_norm_sq(&u, &q);
            let rhs = k * (1.0 + u.h_norm_sq());
            growth.record(((lhs - rhs) / rhs.max(f64::MIN_POSITIVE)).max(0.0));
            let l = phi.lipschitz_constant(&q);
            let lhs = phi.hs_distance_sq(&u, &v, &q);
            let rhs = l * (&u - &v).h_norm_sq();
            lipschitz.record(if lhs <= rhs * (1.0 + 1e-12) {
                0.0
            } else {
                (lhs - rhs) / lhs
            });
        }
    }
    out.push(growth.finish());
    out.push(lipschitz.finish());

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    q.sample_modal(1e-2, &mut trajectory_rng(s.seed, 17), &mut a);
    q.sample_modal(1e-2, &mut trajectory_rng(s.seed, 17), &mut b);
    let same = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    out.push(exact("increment_reproducibility", same));

    let dt = 0.01;
    let values: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let path = ControlPath::from_values(dt, values).map_err(|e| SpectralError::Config(e.to_string()))?;
    let summed: f64 = path.values().iter().map(|h| q.cameron_martin_modal_sq(h) * dt).sum();
    out.push(exact("control_energy_quadrature", summed == path.energy(&q)));
    Ok(())
}

fn exact(name: &str, ok: bool) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed: ok,
        worst: if ok { 0.0 } else { 1.0 },
        tolerance: 0.0,
        samples: 1,
    }
}

/// Configuration of the deterministic refinement study: `r = 3`,
/// `μ = β = 1`, `T = 1`, and smooth data (spectrum decaying like `|k|^{-2}`)
/// with `‖u0‖_H = 1`.
pub fn refinement_setup(modes: usize, seed: u64) -> Result<(SolverConfig, SpectralField), SpectralError> {
    let grid = TorusGrid::new(modes, 2.0)?;
    let q = CovarianceSpec::power_law(&grid, 1.5, 0.0).map_err(|e| SpectralError::Config(e.to_string()))?;
    let cfg = SolverConfig::new(
        OperatorParams::new(1.0, 1.0, 3.0)?,
        q,
        NoiseMap::identity(&grid),
        1e-3,
        1.0,
    );
    let u0 = random_field_with_norm(&grid, 2.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok((cfg, u0))
}

/// `|R(T)|/‖u0‖_H²` of the deterministic solver for each `dt`, with the
/// smallest observed order between successive halvings.
pub fn energy_refinement(
    cfg: &SolverConfig,
    u0: &SpectralField,
    dts: &[f64],
) -> Result<RefinementStudy, crate::solver::SolverError> {
    let e0 = u0.h_norm_sq();
    let mut rels = Vec::with_capacity(dts.len());
    for &dt in dts {
        let c = cfg.clone().with_dt(dt);
        let tr = integrate_deterministic(u0, &Forcing::None, &c)?;
        rels.push(tr.residual().abs() / e0);
    }
    let order = rels
        .windows(2)
        .zip(dts.windows(2))
        .map(|(r, d)| (r[0] / r[1]).ln() / (d[0] / d[1]).ln())
        .fold(f64::INFINITY, f64::min);
    Ok(RefinementStudy {
        dts: dts.to_vec(),
        relative_residuals: rels,
        observed_order: order,
    })
}

fn solver_checks(s: &VerifySettings, out: &mut Vec<CheckOutcome>) -> Option<RefinementStudy> {
    let Ok((cfg, u0)) = refinement_setup(s.modes, s.seed) else {
        out.push(exact("solver_setup", false));
        return None;
    };

    let mut div = Tracker::new("trajectory_incompressibility", 1e-10);
    let short = cfg.clone().with_dt(1e-2);
    match integrate_deterministic(
        &u0,
        &Forcing::None,
        &SolverConfig {
            save_every: 1,
            ..short.clone()
        },
    ) {
        Ok(tr) => {
            for (_, u) in &tr.snapshots {
                div.record(u.divergence_defect() / u.v_norm_sq().sqrt().max(f64::MIN_POSITIVE));
            }
        }
        Err(_) => div.record(f64::INFINITY),
    }
    out.push(div.finish());

    let det = integrate_deterministic(&u0, &Forcing::None, &short);
    let sto = integrate_stochastic(&u0, &short, &mut trajectory_rng(s.seed, 0));
    let same = matches!((&det, &sto), (Ok(a), Ok(b)) if a.final_state() == b.final_state() && a.ledger == b.ledger);
    out.push(exact("zero_noise_reduction", same));

    match energy_refinement(&cfg, &u0, &s.refinement_dts) {
        Ok(study) => {
            out.push(CheckOutcome {
                name: "energy_residual_order".into(),
                passed: study.observed_order >= 1.0,
                worst: study.observed_order,
                tolerance: 1.0,
                samples: study.dts.len(),
            });
            Some(study)
        }
        Err(_) => {
            out.push(exact("energy_residual_order", false));
            None
        }
    }
}

/// Runs every check. `energy_residual_order` passes when the observed order
/// is at least its `tolerance`; every other check when `worst ≤ tolerance`.
pub fn verify_ops(settings: &VerifySettings) -> VerifyReport {
    let mut checks = Vec::new();
    if let Err(e) = spectral_checks(settings, &mut checks) {
        checks.push(CheckOutcome {
            name: format!("spectral_setup: {e}"),
            passed: false,
            worst: f64::INFINITY,
            tolerance: 0.0,
            samples: 0,
        });
    }
    if noise_checks(settings, &mut checks).is_err() {
        checks.push(exact("noise_setup", false));
    }
    let refinement = solver_checks(settings, &mut checks);
    VerifyReport { checks, refinement }
}
