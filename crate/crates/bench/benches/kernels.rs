use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scbf_bench::{field, solver};
use scbf_core::action::{adjoint_gradient, ActionDynamics, ActionProblem, OptimizerSettings, PenaltyState, Target};
use scbf_core::noise::trajectory_rng;
use scbf_core::solver::{integrate_stochastic, Dynamics, Stepper};
use scbf_core::spectral::{advection, forchheimer};
use scbf_core::ControlPath;

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operators");
    for n in [4, 8, 16] {
        let cfg = solver(n, 1e-3, 1.0);
        let u = field(cfg.covariance.grid(), 1);
        group.bench_with_input(BenchmarkId::new("advection", n), &u, |b, u| {
            b.iter(|| advection(u).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forchheimer", n), &u, |b, u| {
            b.iter(|| forchheimer(u, &cfg.params).unwrap())
        });
    }
    group.finish();
}

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("solver");
    for n in [4, 8, 16] {
        let cfg = solver(n, 1e-3, 1.0).with_epsilon(0.01);
        let u0 = field(cfg.covariance.grid(), 2);
        let mut stepper = Stepper::new(&cfg, Dynamics::Regular).unwrap();
        group.bench_function(BenchmarkId::new("deterministic_step", n), |b| {
            let mut u = u0.clone();
            b.iter(|| {
                stepper.step(&mut u, None, None, None);
            })
        });
    }
    let cfg = solver(4, 1e-2, 0.5).with_epsilon(0.01);
    let u0 = field(cfg.covariance.grid(), 3);
    group.bench_function("stochastic_path_n4_50_steps", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            integrate_stochastic(&u0, &cfg, &mut trajectory_rng(0, i)).unwrap()
        })
    });
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let cfg = solver(4, 1.0 / 16.0, 1.0);
    let grid = cfg.covariance.grid().clone();
    let prob = ActionProblem {
        u0: field(&grid, 4),
        solver: cfg.clone(),
        target: Target::ExitBall {
            radius: 1.5,
            tolerance: 1e-4,
        },
        dynamics: ActionDynamics::Skeleton,
        settings: OptimizerSettings::default(),
    };
    let pen = PenaltyState::initial(&prob);
    let h = ControlPath::constant(16, cfg.dt, field(&grid, 5).to_modal());
    c.bench_function("adjoint_gradient_n4_16_steps", |b| {
        b.iter(|| adjoint_gradient(&h, &prob, &pen).unwrap())
    });
}

criterion_group!(benches, operators, stepping, gradients);
criterion_main!(benches);
