//! Pseudospectral Galerkin simulator for the stochastic convective
//! Brinkman–Forchheimer equations on the periodic torus, with tools for
//! small-noise large deviations: skeleton and controlled solvers, a
//! minimum-action optimiser, and a Monte-Carlo rare-event harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod noise;
pub mod optim;
pub mod rare_event;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use noise::{ControlPath, CovarianceSpec, NoiseMap};
pub use solver::{SolverConfig, Trajectory};
pub use spectral::{OperatorParams, SpectralError, SpectralField, TorusGrid};
