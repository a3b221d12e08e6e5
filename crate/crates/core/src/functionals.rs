//! Cost functionals on measure curves and their weighted composition.
//!
//! Every time integral is a trapezoid rule on the curve's own snapshot grid.

use serde::{Deserialize, Serialize};

use crate::control::ControlGrid;
use crate::dynamics::Aabb;
use crate::error::{Error, Result};
use crate::kernels::BoundFunction;
use crate::measures::{dist, DiscreteMeasure, MeasureCurve};
use crate::wasserstein::w1;

/// A closed region given as a union of boxes. Atoms on the boundary count
/// as inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvacuationSet {
    pub boxes: Vec<Aabb>,
}

impl EvacuationSet {
    pub fn new(boxes: Vec<Aabb>) -> Self {
        Self { boxes }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    pub fn mass_inside(&self, mu: &DiscreteMeasure) -> f64 {
        mu.atoms().filter(|(x, _)| self.contains(x)).map(|(_, w)| w).sum()
    }
}

/// `∫₀^T ∫ c(t)|x − x₀|^p dν(t,x) dt`.
pub fn manpower_cost(nu: &MeasureCurve, c: &BoundFunction, x0: &[f64], p: f64) -> f64 {
    nu.integrate(|t, m| c.at(t) * m.atoms().map(|(x, w)| w * dist(x, x0).powf(p)).sum::<f64>())
}

/// `∫₀^T ∫ |πx − ∫πy dρ|² dρ dt` with `π` the selected coordinates.
pub fn alignment_cost(rho: &MeasureCurve, coords: &[usize]) -> Result<f64> {
    if let Some(&bad) = coords.iter().find(|&&k| k >= rho.first().dim()) {
        return Err(Error::BadSplit { split: bad, dim: rho.first().dim() });
    }
    Ok(rho.integrate(|_, m| {
        let mean: Vec<f64> = coords.iter().map(|&k| m.atoms().map(|(x, w)| w * x[k]).sum()).collect();
        m.atoms()
            .map(|(x, w)| w * coords.iter().zip(&mean).map(|(&k, c)| (x[k] - c).powi(2)).sum::<f64>())
            .sum()
    }))
}

/// `∫₀^T ρ(t)(C) dt`.
pub fn evacuation_cost(rho: &MeasureCurve, region: &EvacuationSet) -> f64 {
    rho.integrate(|_, m| region.mass_inside(m))
}

/// `∫₀^T W1(ρ(t), ρ̄) dt`.
pub fn w1_tracking_cost(rho: &MeasureCurve, target: &DiscreteMeasure) -> Result<f64> {
    let vals = rho.snapshots().iter().map(|m| w1(m, target)).collect::<Result<Vec<_>>>()?;
    Ok(crate::measures::trapezoid(rho.times(), &vals))
}

/// `W1(ρ(T), ρ̄)`.
pub fn w1_terminal_cost(rho: &MeasureCurve, target: &DiscreteMeasure) -> Result<f64> {
    w1(rho.last(), target)
}

/// Symmetric pair kernels for the self-interaction functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PairKernel {
    /// `|x − y|²`
    SquaredDistance,
    /// `−|x − y|`
    NegativeDistance,
    /// `exp(−|x − y|²/(2s²))`
    Gaussian { scale: f64 },
}

impl PairKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            PairKernel::SquaredDistance => dist(x, y).powi(2),
            PairKernel::NegativeDistance => -dist(x, y),
            PairKernel::Gaussian { scale } => (-dist(x, y).powi(2) / (2.0 * scale * scale)).exp(),
        }
    }
}

/// `∫₀^T Σ_{i,j} w_i w_j Q(x_i, x_j) dt`, diagonal pairs included.
pub fn interaction_cost<Q>(nu: &MeasureCurve, q: Q) -> f64
where
    Q: Fn(&[f64], &[f64]) -> f64,
{
    nu.integrate(|_, m| {
        let mut s = 0.0;
        for (x, wx) in m.atoms() {
            for (y, wy) in m.atoms() {
                s += wx * wy * q(x, y);
            }
        }
        s
    })
}

/// `∫₀^T #{atoms with weight > ε} dt`. With `merge`, coincident atoms are
/// combined first so the count is that of the support.
pub fn atom_count_cost(nu: &MeasureCurve, eps: f64, merge: bool) -> f64 {
    nu.integrate(|_, m| {
        let count = |mm: &DiscreteMeasure| mm.weights().iter().filter(|&&w| w > eps).count() as f64;
        if merge {
            count(&m.merge_coincident())
        } else {
            count(m)
        }
    })
}

/// `∫₀^T ∫_Ω |u|^p dx dt` for a grid control.
pub fn control_energy(u: &ControlGrid, p: f64) -> f64 {
    u.energy(p)
}

fn default_one() -> f64 {
    1.0
}

fn default_profile() -> BoundFunction {
    BoundFunction::constant(1.0).expect("constant profile")
}

/// One functional with its parameters, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Functional {
    Manpower {
        #[serde(default = "default_profile")]
        c: BoundFunction,
        x0: Vec<f64>,
        #[serde(default = "default_one")]
        p: f64,
    },
    Alignment {
        coords: Vec<usize>,
    },
    Evacuation {
        region: EvacuationSet,
    },
    W1Tracking {
        target: DiscreteMeasure,
    },
    W1Terminal {
        target: DiscreteMeasure,
    },
    Interaction {
        q: PairKernel,
    },
    AtomCount {
        #[serde(default)]
        eps: f64,
        #[serde(default)]
        merge: bool,
    },
    ControlEnergy {
        #[serde(default = "default_p")]
        p: f64,
    },
}

fn default_p() -> f64 {
    2.0
}

impl Functional {
    pub fn name(&self) -> &'static str {
        match self {
            Functional::Manpower { .. } => "manpower",
            Functional::Alignment { .. } => "alignment",
            Functional::Evacuation { .. } => "evacuation",
            Functional::W1Tracking { .. } => "w1_tracking",
            Functional::W1Terminal { .. } => "w1_terminal",
            Functional::Interaction { .. } => "interaction",
            Functional::AtomCount { .. } => "atom_count",
            Functional::ControlEnergy { .. } => "control_energy",
        }
    }

    pub fn evaluate(
        &self,
        rho: Option<&MeasureCurve>,
        nu: Option<&MeasureCurve>,
        u: Option<&ControlGrid>,
    ) -> Result<f64> {
        let need_rho = || rho.ok_or(Error::MissingInput(self.name()));
        let need_nu = || nu.ok_or(Error::MissingInput(self.name()));
        match self {
            Functional::Manpower { c, x0, p } => Ok(manpower_cost(need_nu()?, c, x0, *p)),
            Functional::Alignment { coords } => alignment_cost(need_rho()?, coords),
            Functional::Evacuation { region } => Ok(evacuation_cost(need_rho()?, region)),
            Functional::W1Tracking { target } => w1_tracking_cost(need_rho()?, target),
            Functional::W1Terminal { target } => w1_terminal_cost(need_rho()?, target),
            Functional::Interaction { q } => Ok(interaction_cost(need_nu()?, |x, y| q.eval(x, y))),
            Functional::AtomCount { eps, merge } => Ok(atom_count_cost(need_nu()?, *eps, *merge)),
            Functional::ControlEnergy { p } => {
                Ok(control_energy(u.ok_or(Error::MissingInput(self.name()))?, *p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    #[serde(flatten)]
    pub functional: Functional,
    pub weight: f64,
}

/// A weighted sum of functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeCost {
    pub terms: Vec<CostTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermValue {
    pub kind: &'static str,
    pub weight: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub terms: Vec<TermValue>,
}

impl CompositeCost {
    pub fn new(terms: Vec<CostTerm>) -> Result<Self> {
        let c = Self { terms };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidParameter("a composite cost needs at least one term".into()));
        }
        if self.terms.iter().any(|t| !(t.weight.is_finite() && t.weight >= 0.0)) {
            return Err(Error::InvalidParameter("term weights must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    /// True when some term needs the given input.
    pub fn uses_control(&self) -> bool {
        self.terms.iter().any(|t| matches!(t.functional, Functional::ControlEnergy { .. }))
    }
}

/// `Σ weight · term`, with the per-term values.
pub fn composite_cost(
    cost: &CompositeCost,
    rho: Option<&MeasureCurve>,
    nu: Option<&MeasureCurve>,
    u: Option<&ControlGrid>,
) -> Result<CostBreakdown> {
    let mut terms = Vec::with_capacity(cost.terms.len());
    let mut total = 0.0;
    for t in &cost.terms {
        let value = t.functional.evaluate(rho, nu, u)?;
        total += t.weight * value;
        terms.push(TermValue { kind: t.functional.name(), weight: t.weight, value });
    }
    Ok(CostBreakdown { total, terms })
}
