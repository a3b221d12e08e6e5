//! Exact optimal transport between discrete measures.
//!
//! * [`wasserstein_p`] solves the Kantorovich problem exactly (network simplex,
//!   or sorted quantile matching on the line) and returns an optimal plan.
//! * [`w1_dual`] solves the 1-Lipschitz potential problem as a separate LP, so
//!   primal and dual values are computed along independent routes.
//! * [`bounded_lipschitz`] compares measures of possibly different mass with
//!   the bounded-Lipschitz (Fortet–Mourier) metric, which metrizes weak*
//!   convergence on bounded sets of positive measures.

mod lp;
mod network_simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{dist, DiscreteMeasure};

/// Tolerance for marginal constraints of a transport plan.
pub const PLAN_TOL: f64 = 1e-9;
/// Tolerance for treating two total masses as equal.
pub const MASS_MATCH_TOL: f64 = 1e-9;

/// A coupling between `source` and `target`, stored as sparse entries.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
}

impl TransportPlan {
    pub fn new(source: DiscreteMeasure, target: DiscreteMeasure, entries: Vec<(usize, usize, f64)>) -> Self {
        Self { entries, source, target }
    }

    /// The product coupling `w_i v_j / mass`.
    pub fn product(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Self {
        let mass = source.total_mass();
        let mut entries = Vec::with_capacity(source.len() * target.len());
        for (i, &w) in source.weights().iter().enumerate() {
            for (j, &v) in target.weights().iter().enumerate() {
                entries.push((i, j, w * v / mass));
            }
        }
        Self::new(source.clone(), target.clone(), entries)
    }

    /// `Σ m_ij |x_i − y_j|^p`.
    pub fn cost(&self, p: f64) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * dist(self.source.point(i), self.target.point(j)).powf(p))
            .sum()
    }
}

/// Result of a feasibility check on a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanReport {
    pub ok: bool,
    pub max_marginal_error: f64,
}

/// Checks nonnegativity and both marginal constraints within [`PLAN_TOL`].
pub fn verify_plan(plan: &TransportPlan) -> PlanReport {
    let mut rows = vec![0.0; plan.source.len()];
    let mut cols = vec![0.0; plan.target.len()];
    let mut ok = true;
    for &(i, j, m) in &plan.entries {
        if i >= rows.len() || j >= cols.len() || !(m >= 0.0) {
            ok = false;
            continue;
        }
        rows[i] += m;
        cols[j] += m;
    }
    let row_err = rows
        .iter()
        .zip(plan.source.weights())
        .map(|(r, w)| (r - w).abs());
    let col_err = cols
        .iter()
        .zip(plan.target.weights())
        .map(|(c, v)| (c - v).abs());
    let max_err = row_err.chain(col_err).fold(0.0, f64::max);
    PlanReport { ok: ok && max_err <= PLAN_TOL, max_marginal_error: max_err }
}

/// Outcome of an exact transport solve.
#[derive(Debug, Clone)]
pub struct Transport {
    /// `(cost / mass)^{1/p}`.
    pub distance: f64,
    /// Raw optimal cost `Σ m_ij |x_i − y_j|^p`.
    pub cost: f64,
    pub p: f64,
    pub plan: TransportPlan,
}

impl Transport {
    pub fn export(&self) -> PlanExport {
        PlanExport { cost: self.cost, p: self.p, entries: self.plan.entries.clone() }
    }
}

/// Plan export JSON: `{"cost": c, "p": p, "entries": [[i, j, m], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanExport {
    pub cost: f64,
    pub p: f64,
    pub entries: Vec<(usize, usize, f64)>,
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if (a - b).abs() > MASS_MATCH_TOL * a.max(b).max(1.0) {
        return Err(Error::MassMismatch { left: a, right: b });
    }
    Ok(a)
}

/// Exact `W_p` and an optimal plan. On the line the sorted quantile coupling
/// is used; elsewhere the network simplex.
pub fn wasserstein_p(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<Transport> {
    if mu.dim() == 1 && nu.dim() == 1 {
        wasserstein_1d(mu, nu, p)
    } else {
        wasserstein_p_lp(mu, nu, p)
    }
}

/// Exact `W_p` through the network simplex regardless of dimension.
pub fn wasserstein_p_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<Transport> {
    check_p(p)?;
    let mass = check_pair(mu, nu)?;
    if mass == 0.0 {
        return Ok(zero_transport(mu, nu, p));
    }
    let (m, n) = (mu.len(), nu.len());
    let mut cost = Vec::with_capacity(m * n);
    for (x, _) in mu.atoms() {
        for (y, _) in nu.atoms() {
            cost.push(dist(x, y).powf(p));
        }
    }
    let demand = balanced_demand(nu, mass);
    let sol = network_simplex::solve_transport(mu.weights(), &demand, &cost)?;
    let cost_total = sol.cost.max(0.0);
    Ok(Transport {
        distance: (cost_total / mass).powf(1.0 / p),
        cost: cost_total,
        p,
        plan: TransportPlan::new(mu.clone(), nu.clone(), sol.flows),
    })
}

/// Sorted quantile matching on R; optimal for every convex cost `|x−y|^p`, p ≥ 1.
pub fn wasserstein_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<Transport> {
    check_p(p)?;
    let mass = check_pair(mu, nu)?;
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
    }
    if mass == 0.0 {
        return Ok(zero_transport(mu, nu, p));
    }
    let demand = balanced_demand(nu, mass);
    let order = |m: &DiscreteMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.point(a)[0].total_cmp(&m.point(b)[0]));
        idx
    };
    let (si, ti) = (order(mu), order(nu));
    let mut supply: Vec<f64> = si.iter().map(|&i| mu.weight(i)).collect();
    let mut dem: Vec<f64> = ti.iter().map(|&j| demand[j]).collect();
    let (mut a, mut b) = (0, 0);
    let mut entries = Vec::new();
    let mut cost = 0.0;
    while a < si.len() && b < ti.len() {
        let q = supply[a].min(dem[b]);
        if q > 0.0 {
            let (i, j) = (si[a], ti[b]);
            entries.push((i, j, q));
            cost += q * (mu.point(i)[0] - nu.point(j)[0]).abs().powf(p);
        }
        supply[a] -= q;
        dem[b] -= q;
        if supply[a] <= dem[b] {
            a += 1;
        } else {
            b += 1;
        }
    }
    Ok(Transport {
        distance: (cost / mass).powf(1.0 / p),
        cost,
        p,
        plan: TransportPlan::new(mu.clone(), nu.clone(), entries),
    })
}

/// `W_1` distance.
pub fn w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(wasserstein_p(mu, nu, 1.0)?.distance)
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("transport exponent p={p} must be ≥ 1")))
    }
}

fn balanced_demand(nu: &DiscreteMeasure, mass: f64) -> Vec<f64> {
    let nm = nu.total_mass();
    if nm == mass {
        nu.weights().to_vec()
    } else {
        nu.weights().iter().map(|v| v * mass / nm).collect()
    }
}

fn zero_transport(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Transport {
    Transport {
        distance: 0.0,
        cost: 0.0,
        p,
        plan: TransportPlan::new(mu.clone(), nu.clone(), Vec::new()),
    }
}

/// Optimal 1-Lipschitz potential for the `W_1` dual problem.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// `Σ φ(x_i) w_i − Σ φ(y_j) v_j` (unnormalized; equals `W_1` for unit mass).
    pub value: f64,
    pub source_potential: Vec<f64>,
    pub target_potential: Vec<f64>,
}

/// Maximizes `∫φ dμ − ∫φ dν` over potentials that are 1-Lipschitz on the
/// union of the atoms.
pub fn w1_dual(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<DualSolution> {
    check_pair(mu, nu)?;
    let (points, weights) = union(mu, nu);
    let k = weights.len();
    let diam = pairwise_max(&points);
    if diam == 0.0 {
        return Ok(DualSolution {
            value: 0.0,
            source_potential: vec![0.0; mu.len()],
            target_potential: vec![0.0; nu.len()],
        });
    }
    // φ is shifted to take values in [0, diam]; some optimal potential always does.
    let (rows, rhs) = potential_constraints(&points, diam, f64::INFINITY);
    let sol = lp::maximize(&weights, &rows, &rhs)?;
    let value = weights.iter().zip(&sol.x).map(|(c, x)| c * x).sum();
    debug_assert_eq!(sol.x.len(), k);
    Ok(DualSolution {
        value,
        source_potential: sol.x[..mu.len()].to_vec(),
        target_potential: sol.x[mu.len()..].to_vec(),
    })
}

/// `sup { ∫φ d(μ−ν) : ‖φ‖∞ ≤ 1, Lip(φ) ≤ 1 }`, solved as an LP over the
/// potential values on the union of atoms. Masses may differ.
pub fn bounded_lipschitz(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.is_empty() && nu.is_empty() {
        return Ok(0.0);
    }
    if !mu.is_empty() && !nu.is_empty() && mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let (points, weights) = union(mu, nu);
    // ψ = φ + 1 ∈ [0, 2]; pairs at distance ≥ 2 are implied by the box.
    let (rows, rhs) = potential_constraints(&points, 2.0, 2.0);
    let sol = lp::maximize(&weights, &rows, &rhs)?;
    let shift: f64 = weights.iter().sum();
    Ok((sol.objective - shift).max(0.0))
}

fn union(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points = Vec::with_capacity(mu.len() + nu.len());
    let mut weights = Vec::with_capacity(mu.len() + nu.len());
    for (x, w) in mu.atoms() {
        points.push(x.to_vec());
        weights.push(w);
    }
    for (y, v) in nu.atoms() {
        points.push(y.to_vec());
        weights.push(-v);
    }
    (points, weights)
}

fn pairwise_max(points: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (a, x) in points.iter().enumerate() {
        for y in &points[a + 1..] {
            d = d.max(dist(x, y));
        }
    }
    d
}

/// Rows `ψ_a − ψ_b ≤ |a − b|` for pairs closer than `skip_at`, plus `ψ_a ≤ upper`.
fn potential_constraints(points: &[Vec<f64>], upper: f64, skip_at: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = points.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let d = dist(&points[a], &points[b]);
            if d >= skip_at {
                continue;
            }
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            row[b] = -1.0;
            rows.push(row);
            rhs.push(d);
        }
    }
    for a in 0..k {
        let mut row = vec![0.0; k];
        row[a] = 1.0;
        rows.push(row);
        rhs.push(upper);
    }
    (rows, rhs)
}
