use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::wasserstein::bounded_lipschitz;

/// Slack on the increment constraint after projection.
pub const INCREMENT_TOL: f64 = 1e-9;
const BISECTION_STEPS: usize = 60;

/// A control measure curve given by atom positions and weights at equally
/// spaced knots, linearly interpolated in between. The number of atoms is
/// fixed; weights are free below the mass cap `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuParametrization {
    pub dim: usize,
    pub atoms: usize,
    /// Number of time intervals; there are `knots + 1` knot measures.
    pub knots: usize,
    pub horizon: f64,
    pub max_mass: f64,
    /// Speed cap `L′` on the bounded-Lipschitz increments.
    pub speed: f64,
    /// Layout `[knot][atom][coordinate]`.
    pub positions: Vec<f64>,
    /// Layout `[knot][atom]`.
    pub weights: Vec<f64>,
}

impl NuParametrization {
    /// The constant curve at `nu0`.
    pub fn stationary(nu0: &DiscreteMeasure, knots: usize, horizon: f64, max_mass: f64, speed: f64) -> Result<Self> {
        if knots == 0 || !(horizon > 0.0) || !(max_mass >= 0.0) || !(speed >= 0.0) {
            return Err(Error::InvalidParameter("need knots ≥ 1, T > 0, M ≥ 0, L′ ≥ 0".into()));
        }
        let positions = nu0.coords().repeat(knots + 1);
        let weights = nu0.weights().repeat(knots + 1);
        Ok(Self { dim: nu0.dim(), atoms: nu0.len(), knots, horizon, max_mass, speed, positions, weights })
    }

    pub fn knot_width(&self) -> f64 {
        self.horizon / self.knots as f64
    }

    fn knot_positions(&self, k: usize) -> &[f64] {
        let s = self.atoms * self.dim;
        &self.positions[k * s..(k + 1) * s]
    }

    fn knot_weights(&self, k: usize) -> &[f64] {
        &self.weights[k * self.atoms..(k + 1) * self.atoms]
    }

    pub fn knot_measure(&self, k: usize) -> DiscreteMeasure {
        DiscreteMeasure::new(self.dim, self.knot_positions(k).to_vec(), self.knot_weights(k).to_vec())
            .expect("knot weights are nonnegative after projection")
    }

    fn blend(&self, k: usize, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let lerp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect();
        if k + 1 > self.knots {
            return (self.knot_positions(k).to_vec(), self.knot_weights(k).to_vec());
        }
        (
            lerp(self.knot_positions(k), self.knot_positions(k + 1)),
            lerp(self.knot_weights(k), self.knot_weights(k + 1)),
        )
    }

    /// `ν(t)`, interpolated linearly in positions and weights.
    pub fn at(&self, t: f64) -> DiscreteMeasure {
        let s = (t / self.knot_width()).clamp(0.0, self.knots as f64);
        let k = (s.floor() as usize).min(self.knots - 1);
        let (pos, w) = self.blend(k, s - k as f64);
        let w = w.into_iter().map(|v| v.max(0.0)).collect();
        DiscreteMeasure::new(self.dim, pos, w).expect("interpolated weights are nonnegative")
    }

    pub fn params(&self) -> Vec<f64> {
        self.positions.iter().chain(&self.weights).copied().collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        let mut n = self.clone();
        let split = n.positions.len();
        n.positions.copy_from_slice(&params[..split]);
        n.weights.copy_from_slice(&params[split..]);
        n
    }

    pub fn project(&self) -> Self {
        project_nu(self)
    }

    /// Checks weights, the mass cap and the increment constraint.
    pub fn check(&self) -> Result<()> {
        for k in 0..=self.knots {
            let w = self.knot_weights(k);
            if w.iter().any(|v| *v < 0.0) {
                return Err(Error::Validation(format!("negative weight at knot {k}")));
            }
            if w.iter().sum::<f64>() > self.max_mass + INCREMENT_TOL {
                return Err(Error::Validation(format!("mass above M at knot {k}")));
            }
        }
        let cap = self.speed * self.knot_width() + INCREMENT_TOL;
        for k in 1..=self.knots {
            let d = bounded_lipschitz(&self.knot_measure(k - 1), &self.knot_measure(k))?;
            if d > cap {
                return Err(Error::Validation(format!("increment {d} at knot {k} exceeds L′Δt")));
            }
        }
        Ok(())
    }
}

/// Clips weights to `[0, M]` and scales a knot down when its mass exceeds
/// `M`; then, sweeping forward in time, pulls each knot (positions and
/// weights together) towards its predecessor until the bounded-Lipschitz
/// increment is at most `L′Δt`.
pub fn project_nu(param: &NuParametrization) -> NuParametrization {
    let mut p = param.clone();
    let m = p.max_mass;
    for k in 0..=p.knots {
        let w = &mut p.weights[k * p.atoms..(k + 1) * p.atoms];
        w.iter_mut().for_each(|v| *v = v.clamp(0.0, m));
        let total: f64 = w.iter().sum();
        if total > m {
            let s = m / total;
            w.iter_mut().for_each(|v| *v *= s);
        }
    }
    let cap = p.speed * p.knot_width();
    let stride = p.atoms * p.dim;
    for k in 1..=p.knots {
        let prev = p.knot_measure(k - 1);
        let increment = |q: &NuParametrization, lambda: f64| -> f64 {
            let (pos, w) = q.blend(k - 1, lambda);
            let mu = DiscreteMeasure::new(q.dim, pos, w).expect("blend of valid knots");
            bounded_lipschitz(&prev, &mu).unwrap_or(f64::INFINITY)
        };
        if increment(&p, 1.0) <= cap {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if increment(&p, mid) <= cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (pos, w) = p.blend(k - 1, lo);
        p.positions[k * stride..(k + 1) * stride].copy_from_slice(&pos);
        p.weights[k * p.atoms..(k + 1) * p.atoms].copy_from_slice(&w);
    }
    p
}
