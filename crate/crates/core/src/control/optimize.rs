use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::ControlGrid;
use super::nu::NuParametrization;
use crate::dynamics::{empirical_curve, Domain, ParticleState, ParticleSystem, SimConfig};
use crate::error::{Error, Result};
use crate::functionals::{composite_cost, CompositeCost, CostBreakdown};
use crate::kernels::{convolve, AdmissibleField, BoundFunction};
use crate::measures::{DiscreteMeasure, MeasureCurve};

/// The data of a control problem: kernels, initial populations, dynamics
/// settings and the cost.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub dim: usize,
    pub domain: Option<Domain>,
    pub sim: SimConfig,
    pub stride: usize,
    pub k1: AdmissibleField,
    pub k2: AdmissibleField,
    pub h1: AdmissibleField,
    pub h2: AdmissibleField,
    pub rho0: ParticleState,
    pub nu0: ParticleState,
    pub cost: CompositeCost,
}

/// The decision variable: a velocity grid driving `ν` (coupled system), or
/// the `ν` curve itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Decision {
    Problem2(ControlGrid),
    Problem1(NuParametrization),
}

impl Decision {
    pub fn params(&self) -> Vec<f64> {
        match self {
            Decision::Problem2(g) => g.params().to_vec(),
            Decision::Problem1(n) => n.params(),
        }
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        match self {
            Decision::Problem2(g) => Decision::Problem2(g.with_params(params)),
            Decision::Problem1(n) => Decision::Problem1(n.with_params(params)),
        }
    }

    pub fn project(&self) -> Self {
        match self {
            Decision::Problem2(g) => Decision::Problem2(g.project()),
            Decision::Problem1(n) => Decision::Problem1(n.project()),
        }
    }

    /// Admissibility validator: caps, mass and increment constraints.
    pub fn check(&self) -> Result<()> {
        match self {
            Decision::Problem2(g) => g.check(),
            Decision::Problem1(n) => n.check(),
        }
    }

    /// The zero control of the same shape: `u ≡ 0`, or `ν` with no mass.
    pub fn zero(&self) -> Self {
        match self {
            Decision::Problem2(g) => Decision::Problem2(g.with_params(&vec![0.0; g.values.len()])),
            Decision::Problem1(n) => {
                let mut z = n.clone();
                z.weights.iter_mut().for_each(|w| *w = 0.0);
                Decision::Problem1(z)
            }
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Decision::Problem2(_) => "problem2",
            Decision::Problem1(_) => "problem1",
        }
    }

    fn random(&self, rng: &mut ChaCha8Rng, domain: Option<&Domain>) -> Self {
        match self {
            Decision::Problem2(g) => {
                let vals: Vec<f64> = g.values.iter().map(|_| rng.random_range(-1.0..=1.0) * g.u_max).collect();
                Decision::Problem2(g.with_params(&vals)).project()
            }
            Decision::Problem1(n) => {
                let mut r = n.clone();
                for (i, x) in r.positions.iter_mut().enumerate() {
                    let k = i % n.dim;
                    *x = match domain {
                        Some(d) => rng.random_range(d.bounds.lo[k]..=d.bounds.hi[k]),
                        None => *x + rng.random_range(-1.0..=1.0),
                    };
                }
                let share = if n.atoms > 0 { n.max_mass / n.atoms as f64 } else { 0.0 };
                r.weights.iter_mut().for_each(|w| *w = rng.random_range(0.0..=1.0) * share);
                Decision::Problem1(r).project()
            }
        }
    }
}

/// Cost of one control together with the curves it produced.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub breakdown: CostBreakdown,
    pub rho: MeasureCurve,
    pub nu: MeasureCurve,
}

/// Runs the forward dynamics for a control and evaluates the cost on the
/// resulting curves. The state equation holds by construction.
pub fn forward_cost(problem: &ControlProblem, decision: &Decision) -> Result<Evaluation> {
    let cfg = &problem.sim;
    match decision {
        Decision::Problem2(grid) => {
            let sys = ParticleSystem::coupled(
                problem.dim,
                problem.k1.clone(),
                problem.h1.clone(),
                problem.k2.clone(),
                problem.h2.clone(),
                grid.to_field(),
                problem.domain.clone(),
            );
            let trajs = sys.simulate(&[problem.rho0.clone(), problem.nu0.clone()], cfg)?;
            let rho = empirical_curve(&trajs[0], problem.stride)?;
            let nu = empirical_curve(&trajs[1], problem.stride)?;
            let breakdown = composite_cost(&problem.cost, Some(&rho), Some(&nu), Some(grid))?;
            Ok(Evaluation { cost: breakdown.total, breakdown, rho, nu })
        }
        Decision::Problem1(param) => {
            let h = problem.h1.clone();
            let nu_param = param.clone();
            let ell = BoundFunction::constant(h.ell().sup(cfg.horizon) * param.max_mass)?;
            let drive = AdmissibleField::custom(problem.dim, "h_conv_nu", ell, move |t, x, out| {
                let nu_t = nu_param.at(t);
                let v = convolve(&h, &nu_t, t, x).expect("dimensions checked at load");
                out.copy_from_slice(&v);
            });
            let sys = ParticleSystem::single(problem.dim, problem.k1.clone(), drive, problem.domain.clone());
            let traj = sys.simulate(std::slice::from_ref(&problem.rho0), cfg)?.remove(0);
            let rho = empirical_curve(&traj, problem.stride)?;
            let snaps: Vec<DiscreteMeasure> = rho.times().iter().map(|&t| param.at(t)).collect();
            let nu = MeasureCurve::new(rho.times().to_vec(), snaps)?;
            let breakdown = composite_cost(&problem.cost, Some(&rho), Some(&nu), None)?;
            Ok(Evaluation { cost: breakdown.total, breakdown, rho, nu })
        }
    }
}

/// Cost of the zero control.
pub fn baseline(problem: &ControlProblem, template: &Decision) -> Result<Evaluation> {
    forward_cost(problem, &template.zero())
}

fn default_max_iter() -> usize {
    20
}
fn default_fd_step() -> f64 {
    1e-3
}
fn default_step() -> f64 {
    0.5
}
fn default_shrink() -> f64 {
    0.5
}
fn default_grow() -> f64 {
    1.5
}
fn default_restarts() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-10
}
fn default_line_search() -> usize {
    6
}
fn default_budget() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationConfig {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Initial step length, in parameter units along the sup-normalized
    /// descent direction.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_grow")]
    pub grow: f64,
    /// Random starts in addition to the zero control.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Minimum decrease for a step to be accepted.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_line_search")]
    pub line_search: usize,
    #[serde(default = "default_budget")]
    pub max_evaluations: usize,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fd_step > 0.0
            && self.step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.grow >= 1.0
            && self.tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("optimizer needs fd_step, step > 0, 0 < shrink < 1, grow ≥ 1, tol ≥ 0".into()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best: Decision,
    pub best_cost: f64,
    pub baseline_cost: f64,
    pub breakdown: CostBreakdown,
    /// Accepted costs of the winning start, beginning with its initial cost.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// 0 for the zero control, `r` for the r-th random start.
    pub start: usize,
    pub rho: MeasureCurve,
    pub nu: MeasureCurve,
}

impl OptimizationResult {
    pub fn report(&self) -> ResultReport {
        ResultReport {
            mode: self.best.mode(),
            best_cost: self.best_cost,
            baseline_cost: self.baseline_cost,
            improvement: if self.baseline_cost != 0.0 { 1.0 - self.best_cost / self.baseline_cost } else { 0.0 },
            breakdown: self.breakdown.clone(),
            evaluations: self.evaluations,
            start: self.start,
            history: self.history.clone(),
            control: self.best.clone(),
        }
    }
}

/// Result JSON written by the command-line front end.
#[derive(Debug, Clone, Serialize)]
pub struct ResultReport {
    pub mode: &'static str,
    pub best_cost: f64,
    pub baseline_cost: f64,
    /// `1 − best/baseline`; 0 when the baseline is 0.
    pub improvement: f64,
    pub breakdown: CostBreakdown,
    pub evaluations: usize,
    pub start: usize,
    pub history: Vec<f64>,
    pub control: Decision,
}

struct Run {
    x: Vec<f64>,
    cost: f64,
    history: Vec<f64>,
    evaluations: usize,
}

fn descend(
    problem: &ControlProblem,
    template: &Decision,
    start: &Decision,
    config: &OptimizationConfig,
    budget: usize,
) -> Option<Run> {
    let eval = |x: &[f64]| -> f64 {
        forward_cost(problem, &template.with_params(x)).map(|e| e.cost).unwrap_or(f64::INFINITY)
    };
    let project = |x: Vec<f64>| template.with_params(&x).project().params();

    let mut x = start.params();
    let mut cost = eval(&x);
    let mut evaluations = 1;
    if !cost.is_finite() {
        return None;
    }
    let mut history = vec![cost];
    let mut step = config.step;
    let n = x.len();
    let h = config.fd_step;

    for _ in 0..config.max_iter {
        if n == 0 || evaluations + 2 * n > budget {
            break;
        }
        let probes: Vec<f64> = (0..2 * n)
            .into_par_iter()
            .map(|k| {
                let mut y = x.clone();
                y[k / 2] += if k % 2 == 0 { h } else { -h };
                eval(&project(y))
            })
            .collect();
        evaluations += 2 * n;
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = (probes[2 * i], probes[2 * i + 1]);
                if a.is_finite() && b.is_finite() {
                    (a - b) / (2.0 * h)
                } else {
                    0.0
                }
            })
            .collect();
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..config.line_search {
            if evaluations >= budget {
                break;
            }
            let trial = project(x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi / scale).collect());
            let c = eval(&trial);
            evaluations += 1;
            if c < cost - config.tol {
                x = trial;
                cost = c;
                history.push(c);
                step *= config.grow;
                accepted = true;
                break;
            }
            step *= config.shrink;
        }
        if !accepted {
            break;
        }
    }
    Some(Run { x, cost, history, evaluations })
}

/// Projected finite-difference descent from the zero control and from
/// `config.restarts` seeded random admissible controls; the best run wins,
/// ties going to the earliest start.
pub fn optimize(problem: &ControlProblem, template: &Decision, config: &OptimizationConfig) -> Result<OptimizationResult> {
    config.validate()?;
    let template = template.project();
    let zero = template.zero();
    let mut starts = vec![zero.clone()];
    for r in 1..=config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        starts.push(template.random(&mut rng, problem.domain.as_ref()));
    }

    let mut evaluations = 0;
    let mut best: Option<(usize, Run)> = None;
    for (i, s) in starts.iter().enumerate() {
        let budget = config.max_evaluations.saturating_sub(evaluations);
        if budget == 0 {
            break;
        }
        if let Some(run) = descend(problem, &template, s, config, budget) {
            evaluations += run.evaluations;
            if best.as_ref().is_none_or(|(_, b)| run.cost < b.cost) {
                best = Some((i, run));
            }
        } else {
            evaluations += 1;
        }
    }
    let (start, run) = best.ok_or_else(|| Error::Optimizer("no start could be evaluated".into()))?;
    let decision = template.with_params(&run.x);
    let eval = forward_cost(problem, &decision)?;
    let base = forward_cost(problem, &zero)?;
    Ok(OptimizationResult {
        best: decision,
        best_cost: eval.cost,
        baseline_cost: base.cost,
        breakdown: eval.breakdown,
        history: run.history,
        evaluations: evaluations + 2,
        start,
        rho: eval.rho,
        nu: eval.nu,
    })
}
