//! Control layer: grid velocity controls for the coupled system, directly
//! parametrized control curves, admissibility projections and a projected
//! finite-difference optimizer.

mod grid;
mod nu;
mod optimize;

pub use grid::{project_admissible, ControlGrid};
pub use nu::{project_nu, NuParametrization, INCREMENT_TOL};
pub use optimize::{
    baseline, forward_cost, optimize, ControlProblem, Decision, Evaluation, OptimizationConfig, OptimizationResult,
    ResultReport,
};
