use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::Aabb;
use crate::error::{Error, Result};
use crate::kernels::{AdmissibleField, BoundFunction};
use crate::measures::{dist, norm};

/// Relative slack on the speed cap when checking admissibility.
const CAP_SLACK: f64 = 1e-12;

/// Velocity values on a regular node grid over a box, one set per time
/// piece. Piecewise constant in time, multilinear in space; points outside
/// the box use the value at their projection onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub bounds: Aabb,
    /// Nodes per coordinate (at least 2 each).
    pub nodes: Vec<usize>,
    /// Number of equal time pieces over `[0, T]`.
    pub knots: usize,
    pub horizon: f64,
    pub u_max: f64,
    /// Optional cap on `|u_k − u_{k−1}|` at every node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_cap: Option<f64>,
    /// Layout `[knot][node][component]`, first coordinate slowest.
    pub values: Vec<f64>,
}

impl ControlGrid {
    pub fn zeros(bounds: Aabb, nodes: Vec<usize>, knots: usize, horizon: f64, u_max: f64) -> Result<Self> {
        if nodes.len() != bounds.dim() || nodes.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("need at least 2 nodes per coordinate".into()));
        }
        if knots == 0 || !(horizon > 0.0) || !(u_max.is_finite() && u_max >= 0.0) {
            return Err(Error::InvalidParameter("need knots ≥ 1, T > 0 and u_max ≥ 0".into()));
        }
        let len = knots * nodes.iter().product::<usize>() * bounds.dim();
        Ok(Self { bounds, nodes, knots, horizon, u_max, jump_cap: None, values: vec![0.0; len] })
    }

    pub fn with_jump_cap(mut self, cap: Option<f64>) -> Self {
        self.jump_cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn knot_width(&self) -> f64 {
        self.horizon / self.knots as f64
    }

    fn spacing(&self, k: usize) -> f64 {
        (self.bounds.hi[k] - self.bounds.lo[k]) / (self.nodes[k] - 1) as f64
    }

    fn offset(&self, knot: usize, node: usize) -> usize {
        (knot * self.node_count() + node) * self.dim()
    }

    pub fn value(&self, knot: usize, node: usize) -> &[f64] {
        let o = self.offset(knot, node);
        &self.values[o..o + self.dim()]
    }

    fn knot_at(&self, t: f64) -> usize {
        ((t / self.knot_width()).floor().max(0.0) as usize).min(self.knots - 1)
    }

    /// `u(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let knot = self.knot_at(t);
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let n = self.nodes[k];
            let s = ((x[k] - self.bounds.lo[k]) / self.spacing(k)).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        let mut out = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut node = 0;
            for k in 0..d {
                let bit = (corner >> (d - 1 - k)) & 1;
                weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                node = node * self.nodes[k] + base[k] + bit;
            }
            if weight != 0.0 {
                for (o, v) in out.iter_mut().zip(self.value(knot, node)) {
                    *o += weight * v;
                }
            }
        }
        out
    }

    /// Volume of the dual cell of each node (half cells on faces).
    fn node_volumes(&self) -> Vec<f64> {
        let d = self.dim();
        (0..self.node_count())
            .map(|mut node| {
                let mut v = 1.0;
                for k in (0..d).rev() {
                    let n = self.nodes[k];
                    let i = node % n;
                    node /= n;
                    let h = self.spacing(k);
                    v *= if i == 0 || i == n - 1 { 0.5 * h } else { h };
                }
                v
            })
            .collect()
    }

    /// `Σ_knots Δt Σ_nodes vol_node |u_node|^p`: the nodal quadrature of
    /// `∫₀^T ∫_Ω |u|^p dx dt`, exact for spatially constant fields.
    pub fn energy(&self, p: f64) -> f64 {
        let vols = self.node_volumes();
        let dt = self.knot_width();
        let mut total = 0.0;
        for knot in 0..self.knots {
            for (node, vol) in vols.iter().enumerate() {
                total += dt * vol * norm(self.value(knot, node)).powf(p);
            }
        }
        total
    }

    /// Spatial Lipschitz bound of the interpolant: `d · 2u_max / h`.
    pub fn lipschitz_bound(&self) -> f64 {
        let h = (0..self.dim()).map(|k| self.spacing(k)).fold(f64::INFINITY, f64::min);
        self.dim() as f64 * 2.0 * self.u_max / h
    }

    /// Declared bound `ℓ = max(u_max, d · 2u_max / h)`.
    pub fn ell(&self) -> f64 {
        self.u_max.max(self.lipschitz_bound())
    }

    pub fn to_field(&self) -> AdmissibleField {
        let grid = Arc::new(self.clone());
        let ell = BoundFunction::constant(self.ell()).expect("grid bound is finite");
        AdmissibleField::custom(self.dim(), "control_grid", ell, move |t, x, out| {
            out.copy_from_slice(&grid.eval(t, x));
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.values
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        let mut g = self.clone();
        g.values.copy_from_slice(params);
        g
    }

    /// Rescales node values above the cap onto it, then (optionally) pulls
    /// each knot towards its predecessor until every jump is within the cap.
    pub fn project(&self) -> Self {
        project_admissible(self, self.u_max, self.jump_cap)
    }

    /// Checks the speed cap and the jump cap.
    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        for (i, v) in self.values.chunks(d).enumerate() {
            if norm(v) > self.u_max * (1.0 + CAP_SLACK) + CAP_SLACK {
                return Err(Error::Validation(format!("control value {i} exceeds u_max")));
            }
        }
        if let Some(cap) = self.jump_cap {
            for knot in 1..self.knots {
                for node in 0..self.node_count() {
                    if dist(self.value(knot, node), self.value(knot - 1, node)) > cap * (1.0 + CAP_SLACK) + CAP_SLACK {
                        return Err(Error::Validation(format!("jump at knot {knot}, node {node} exceeds the cap")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Projection onto `{|u| ≤ u_max}` and, when given, onto knot-to-knot jumps
/// `≤ jump_cap` by a forward sweep. Values within the validator's relative
/// slack are left alone, which makes the projection exactly idempotent.
pub fn project_admissible(grid: &ControlGrid, u_max: f64, jump_cap: Option<f64>) -> ControlGrid {
    let mut g = grid.clone();
    g.u_max = u_max;
    g.jump_cap = jump_cap;
    let d = g.dim();
    for v in g.values.chunks_mut(d) {
        let n = norm(v);
        if n > u_max * (1.0 + CAP_SLACK) {
            let s = u_max / n;
            v.iter_mut().for_each(|c| *c *= s);
        }
    }
    if let Some(cap) = jump_cap {
        for knot in 1..g.knots {
            for node in 0..g.node_count() {
                let prev = g.value(knot - 1, node).to_vec();
                let o = g.offset(knot, node);
                let cur = &mut g.values[o..o + d];
                let jump = dist(cur, &prev);
                if jump > cap * (1.0 + CAP_SLACK) {
                    let s = cap / jump;
                    for (c, p) in cur.iter_mut().zip(&prev) {
                        *c = p + s * (*c - p);
                    }
                }
            }
        }
    }
    g
}
