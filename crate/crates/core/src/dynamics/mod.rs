//! Particle systems driven by convolution kernels, their time integration,
//! a priori bounds and the weak-form residual check.

mod bounds;
mod convergence;
mod domain;
mod system;
mod weak;

pub use bounds::{lipschitz_constant_l, support_bound_r};
pub use convergence::{convergence_study, medians, write_convergence_csv, ConvergenceRow, StudySetup};
pub use domain::{Aabb, Domain};
pub use system::{
    empirical_curve, rhs_single, simulate_coupled, simulate_single, write_curve_csv, Integrator, ParticleState, ParticleSystem,
    Population, SimConfig, Trajectory,
};
pub use weak::{standard_battery, weak_residual, SeparableTest, TestFunction};

/// Weak residual of population `pop` of a simulated system against its own
/// velocity field, using every stored step.
pub fn trajectory_residual<T: TestFunction + ?Sized>(
    system: &ParticleSystem,
    trajs: &[Trajectory],
    pop: usize,
    boundary_tol: f64,
    test: &T,
) -> crate::Result<f64> {
    let curve = empirical_curve(&trajs[pop], 1)?;
    let weights: Vec<&[f64]> = trajs.iter().map(|t| t.weights.as_slice()).collect();
    let velocity = |k: usize, t: f64, x: &[f64]| {
        let positions: Vec<&[f64]> = trajs.iter().map(|tr| tr.positions[k].as_slice()).collect();
        let mut v = vec![0.0; system.dim];
        system.velocity_at(pop, t, &positions, &weights, x, boundary_tol, &mut v);
        v
    };
    Ok(weak_residual(&curve, velocity, test))
}
