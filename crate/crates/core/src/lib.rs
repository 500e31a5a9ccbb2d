//! Discrete variable-exponent fractional p-Laplacian flows with a power
//! source on a one-dimensional cell-centered grid: modular spaces, the
//! nonlocal operator, energy and Nehari functionals, potential-well
//! geometry, time stepping, and reproducible experiments.

// `!(x > 0.0)` is used on purpose so that NaN lands in the error branch
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod exponent;
pub mod grid;
pub mod modular;
pub mod operator;
pub mod well;

pub use energy::{energy, energy_gradient, nehari_lambda, project_to_nehari, EnergyReport, RayProfile};
pub use error::{Assumption, Error, Result, Witness};
pub use exponent::{critical_exponent, validate_assumptions, ExponentField, ExponentSummary, PairExponent, PointExponent};
pub use grid::{build_grid, Domain, Grid, GridFunction};
pub use modular::{gagliardo_modular, gagliardo_seminorm, lebesgue_modular, luxemburg_norm, ModularReport};
pub use operator::{apply_operator, convexity_inequality_check, monotonicity_gap, weak_form, OperatorContext};
pub use well::{classify, estimate_embedding_constant, well_depth, GeometryOptions, WellClass, WellGeometry};
pub use evolution::{
    blowup_inequality_audit, exterior_invariance_check, run, step_explicit, step_imex, Scheme, SimState, StepControl,
    Termination, TrajectoryRecord,
};
