use std::f64::consts::PI;

use crate::measures::{trapezoid, MeasureCurve};

/// Smooth scalar test function `φ(t, x)` vanishing at `t = 0` and `t = T`.
pub trait TestFunction {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn dt(&self, t: f64, x: &[f64]) -> f64;
    fn grad(&self, t: f64, x: &[f64]) -> Vec<f64>;
}

/// `φ(t,x) = sin^m(kπt/T) · (1 + a·(x−c)) · exp(−|x−c|²/(2s²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableTest {
    pub horizon: f64,
    pub k: f64,
    pub power: i32,
    pub center: Vec<f64>,
    pub width: f64,
    pub tilt: Vec<f64>,
}

impl SeparableTest {
    fn omega(&self) -> f64 {
        self.k * PI / self.horizon
    }

    fn time_factor(&self, t: f64) -> (f64, f64) {
        let w = self.omega();
        let (s, c) = (w * t).sin_cos();
        let m = self.power;
        (s.powi(m), m as f64 * s.powi(m - 1) * c * w)
    }

    fn space_factor(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let s2 = self.width * self.width;
        let g = (-y.iter().map(|v| v * v).sum::<f64>() / (2.0 * s2)).exp();
        let lin = 1.0 + self.tilt.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let grad = y.iter().zip(&self.tilt).map(|(yi, ai)| g * (ai - lin * yi / s2)).collect();
        (lin * g, grad)
    }
}

impl TestFunction for SeparableTest {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.time_factor(t).0 * self.space_factor(x).0
    }

    fn dt(&self, t: f64, x: &[f64]) -> f64 {
        self.time_factor(t).1 * self.space_factor(x).0
    }

    fn grad(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let s = self.time_factor(t).0;
        self.space_factor(x).1.into_iter().map(|g| s * g).collect()
    }
}

/// The standard battery: time factors `sin³(kπt/T)`, `k ∈ {1, 2}`, which
/// vanish to second order at both ends, against tilted Gaussians centred at
/// the given points.
pub fn standard_battery(horizon: f64, centers: &[Vec<f64>], width: f64) -> Vec<SeparableTest> {
    let mut out = Vec::new();
    for (n, c) in centers.iter().enumerate() {
        for k in [1.0, 2.0] {
            let tilt = (0..c.len()).map(|j| if (j + n) % 2 == 0 { 0.5 } else { -0.25 }).collect();
            out.push(SeparableTest { horizon, k, power: 3, center: c.clone(), width, tilt });
        }
    }
    out
}

/// `∫₀^T Σ_i w_i (∂φ/∂t + v·∇φ)(t, x_i(t)) dt`, trapezoid in time. The
/// velocity callback receives the snapshot index, the time and the point.
pub fn weak_residual<V, T>(curve: &MeasureCurve, velocity: V, test: &T) -> f64
where
    V: Fn(usize, f64, &[f64]) -> Vec<f64>,
    T: TestFunction + ?Sized,
{
    let vals: Vec<f64> = curve
        .times()
        .iter()
        .zip(curve.snapshots())
        .enumerate()
        .map(|(k, (&t, snap))| {
            snap.atoms()
                .map(|(x, w)| {
                    let v = velocity(k, t, x);
                    let g = test.grad(t, x);
                    w * (test.dt(t, x) + v.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
                })
                .sum()
        })
        .collect();
    trapezoid(curve.times(), &vals)
}
