//! Divergence-free Fourier fields on the 2-D torus and the operators
//! `A`, `A^α`, `B`, `C` with the norms they are measured in.

mod field;
mod grid;
mod operators;
mod random;
mod snapshot;
pub(crate) mod transform;

pub use field::{SpectralField, TORUS_AREA};
pub use grid::TorusGrid;
pub(crate) use operators::{abs_pow, back_to_field, physical_gradient, physical_values};
pub use operators::{
    advection, advection_bilinear, advection_derivative_transpose, forchheimer, forchheimer_derivative,
    fractional_power_apply, leray_project, lp_norm, monotonicity_gap, norms, quadrature_h_norm_sq, stokes_apply,
    trilinear_form, weighted_h_norm_sq, NormBundle, OperatorParams,
};
pub use random::{random_field, random_field_with_norm};
pub use snapshot::{field_to_string, read_field, write_field};
pub use transform::Workspace;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("collocation grid too small: need at least {required} points per axis, have {actual}")]
    GridTooSmall { required: usize, actual: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("snapshot parse error: {0}")]
    Parse(String),
}
