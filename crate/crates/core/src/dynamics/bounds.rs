use crate::kernels::BoundFunction;

/// Gronwall bound on particle radii for data supported in a ball of radius
/// `delta_b`: `R = (δ + 2∫ℓ) exp(3∫ℓ)`.
pub fn support_bound_r(delta_b: f64, ell: &BoundFunction, horizon: f64) -> f64 {
    let l = ell.integral(horizon);
    (delta_b + 2.0 * l) * (3.0 * l).exp()
}

/// Time-Lipschitz constant of the measure curve in `W1`: `(2 + 3R)‖ℓ‖∞`.
pub fn lipschitz_constant_l(r: f64, ell_sup: f64) -> f64 {
    (2.0 + 3.0 * r) * ell_sup
}
