//! Scenario files: everything needed to simulate, optimize or run a
//! convergence study, in one JSON document.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::{ControlGrid, ControlProblem, Decision, NuParametrization, OptimizationConfig};
use crate::dynamics::{Domain, Integrator, ParticleState, SimConfig};
use crate::error::{Error, Result};
use crate::functionals::CompositeCost;
use crate::kernels::{validate_admissibility, AdmissibilityReport, AdmissibleField, KernelDescriptor};
use crate::measures::DiscreteMeasure;

/// Monte-Carlo samples used when validating kernels at load time.
pub const LOAD_SAMPLES: usize = 1000;

const EVACUATION_JSON: &str = include_str!("../fixtures/evacuation.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_tol")]
    pub boundary_tol: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSet {
    #[serde(rename = "K1", alias = "K", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<KernelDescriptor>,
    #[serde(rename = "K2", default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<KernelDescriptor>,
    #[serde(rename = "H1", alias = "H", default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<KernelDescriptor>,
    #[serde(rename = "H2", default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<KernelDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<KernelDescriptor>,
}

/// Seeded initial-population generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    /// Cell-centred grid with `counts[k]` points along coordinate `k`.
    Grid { lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>, #[serde(default = "one")] mass: f64 },
    UniformBox { lo: Vec<f64>, hi: Vec<f64>, n: usize, #[serde(default = "one")] mass: f64 },
    Gaussian { mean: Vec<f64>, std: f64, n: usize, #[serde(default = "one")] mass: f64 },
}

fn one() -> f64 {
    1.0
}

impl Generator {
    /// Draws a population; `n` overrides the configured count for random
    /// generators.
    pub fn sample(&self, n: Option<usize>, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
        match self {
            Generator::Grid { lo, hi, counts, mass } => {
                if lo.len() != hi.len() || lo.len() != counts.len() {
                    return Err(Error::InvalidParameter("grid bounds and counts disagree".into()));
                }
                let total: usize = counts.iter().product();
                let d = lo.len();
                let mut coords = Vec::with_capacity(total * d);
                for mut idx in 0..total {
                    let mut p = vec![0.0; d];
                    for k in (0..d).rev() {
                        let i = idx % counts[k];
                        idx /= counts[k];
                        p[k] = lo[k] + (hi[k] - lo[k]) * (i as f64 + 0.5) / counts[k] as f64;
                    }
                    coords.extend(p);
                }
                DiscreteMeasure::new(d, coords, vec![mass / total as f64; total])
            }
            Generator::UniformBox { lo, hi, n: n0, mass } => {
                let n = n.unwrap_or(*n0);
                let d = lo.len();
                let coords = (0..n * d).map(|i| rng.random_range(lo[i % d]..=hi[i % d])).collect();
                DiscreteMeasure::new(d, coords, vec![mass / n as f64; n])
            }
            Generator::Gaussian { mean, std, n: n0, mass } => {
                let n = n.unwrap_or(*n0);
                let d = mean.len();
                let coords = (0..n * d).map(|i| mean[i % d] + std * rng.sample::<f64, _>(StandardNormal)).collect();
                DiscreteMeasure::new(d, coords, vec![mass / n as f64; n])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Literal(DiscreteMeasure),
    Generated(Generator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ControlSpec {
    Problem2 {
        knots: usize,
        nodes: Vec<usize>,
        u_max: f64,
        #[serde(default)]
        jump_cap: Option<f64>,
    },
    Problem1 {
        knots: usize,
        max_mass: f64,
        speed: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    #[serde(rename = "Ns")]
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub sampler: Generator,
}

/// A scenario as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub dim: usize,
    pub horizon: f64,
    #[serde(default)]
    pub domain: Option<Domain>,
    pub sim: SimSettings,
    #[serde(default)]
    pub kernels: KernelSet,
    pub rho0: InitialSpec,
    #[serde(default)]
    pub nu0: Option<InitialSpec>,
    #[serde(default)]
    pub cost: Option<CompositeCost>,
    #[serde(default)]
    pub control: Option<ControlSpec>,
    #[serde(default)]
    pub optimizer: Option<OptimizationConfig>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
}

/// Kernels resolved to fields; absent ones are zero.
#[derive(Debug, Clone)]
pub struct Fields {
    pub k1: AdmissibleField,
    pub k2: AdmissibleField,
    pub h1: AdmissibleField,
    pub h2: AdmissibleField,
    pub f: AdmissibleField,
}

/// Outcome of checking one kernel of a scenario.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCheck {
    pub kernel: &'static str,
    pub report: AdmissibilityReport,
}

/// Stream ids for the scenario's random draws.
const RHO_STREAM: u64 = 1;
const NU_STREAM: u64 = 2;

impl Scenario {
    /// Parses and validates; a missing seed is a schema error.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
        s.validate_schema()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The frozen evacuation fixture: a crowd in the left half of the unit
    /// square, attracted towards four controlled agents on the right.
    pub fn standard_evacuation() -> Self {
        Self::from_json(EVACUATION_JSON).expect("bundled fixture is valid")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate_schema(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if let Some(d) = &self.domain {
            d.validate().map_err(|e| Error::Validation(e.to_string()))?;
            if d.dim() != self.dim {
                return bad(format!("domain has dimension {}, scenario {}", d.dim(), self.dim));
            }
        }
        self.sim_config().validate().map_err(|e| Error::Validation(e.to_string()))?;
        if self.sim.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if let Some(c) = &self.cost {
            c.validate().map_err(|e| Error::Validation(e.to_string()))?;
        }
        if let Some(o) = &self.optimizer {
            o.validate().map_err(|e| Error::Validation(e.to_string()))?;
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            horizon: self.horizon,
            integrator: self.sim.integrator,
            boundary_tol: self.sim.boundary_tol,
        }
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    fn realize(&self, spec: &InitialSpec, stream: u64, what: &str) -> Result<DiscreteMeasure> {
        let mu = match spec {
            InitialSpec::Literal(m) => m.clone(),
            InitialSpec::Generated(g) => g.sample(None, &mut self.stream(stream))?,
        };
        if !mu.is_empty() && mu.dim() != self.dim {
            return Err(Error::Validation(format!("{what} has dimension {}, scenario {}", mu.dim(), self.dim)));
        }
        if let Some(d) = &self.domain {
            if let Some(i) = (0..mu.len()).find(|&i| !d.contains(mu.point(i))) {
                return Err(Error::Validation(format!("{what} atom {i} lies outside the domain")));
            }
        }
        Ok(mu)
    }

    pub fn rho0(&self) -> Result<DiscreteMeasure> {
        self.realize(&self.rho0, RHO_STREAM, "rho0")
    }

    pub fn nu0(&self) -> Result<Option<DiscreteMeasure>> {
        self.nu0.as_ref().map(|s| self.realize(s, NU_STREAM, "nu0")).transpose()
    }

    pub fn fields(&self) -> Result<Fields> {
        let build = |d: &Option<KernelDescriptor>| -> Result<AdmissibleField> {
            match d {
                Some(desc) => AdmissibleField::from_descriptor(desc, self.dim).map_err(|e| Error::Validation(e.to_string())),
                None => Ok(AdmissibleField::zero(self.dim)),
            }
        };
        let k = &self.kernels;
        Ok(Fields { k1: build(&k.k1)?, k2: build(&k.k2)?, h1: build(&k.h1)?, h2: build(&k.h2)?, f: build(&k.f)? })
    }

    /// Radius of the validation ball: the domain radius, or in free space the
    /// initial support radius (at least 1).
    pub fn validation_radius(&self) -> Result<f64> {
        if let Some(d) = &self.domain {
            return Ok(d.radius());
        }
        let mut r = 1.0f64;
        r = r.max(self.rho0()?.support_radius().unwrap_or(0.0));
        if let Some(nu) = self.nu0()? {
            r = r.max(nu.support_radius().unwrap_or(0.0));
        }
        Ok(r)
    }

    /// Spot-checks every present kernel against its declared bound.
    pub fn check_kernels(&self) -> Result<Vec<KernelCheck>> {
        let fields = self.fields()?;
        let radius = self.validation_radius()?;
        let k = &self.kernels;
        let present = [
            ("K1", k.k1.is_some(), &fields.k1),
            ("K2", k.k2.is_some(), &fields.k2),
            ("H1", k.h1.is_some(), &fields.h1),
            ("H2", k.h2.is_some(), &fields.h2),
            ("f", k.f.is_some(), &fields.f),
        ];
        Ok(present
            .iter()
            .enumerate()
            .filter(|(_, (_, on, _))| *on)
            .map(|(i, (name, _, field))| KernelCheck {
                kernel: name,
                report: validate_admissibility(field, self.horizon, radius, LOAD_SAMPLES, self.seed ^ (i as u64 + 1)),
            })
            .collect())
    }

    /// Fails with a validation error naming the first inadmissible kernel.
    pub fn require_admissible(&self) -> Result<()> {
        for c in self.check_kernels()? {
            if !c.report.ok {
                return Err(Error::Validation(format!(
                    "kernel {} violates its declared bound (lipschitz ratio {}, growth ratio {})",
                    c.kernel, c.report.worst_lipschitz_ratio, c.report.worst_growth_ratio
                )));
            }
        }
        Ok(())
    }

    pub fn control_problem(&self) -> Result<ControlProblem> {
        let fields = self.fields()?;
        let nu0 = self.nu0()?.unwrap_or_else(|| DiscreteMeasure::empty(self.dim));
        let cost = self.cost.clone().ok_or_else(|| Error::Validation("scenario has no cost".into()))?;
        Ok(ControlProblem {
            dim: self.dim,
            domain: self.domain.clone(),
            sim: self.sim_config(),
            stride: self.sim.stride,
            k1: fields.k1,
            k2: fields.k2,
            h1: fields.h1,
            h2: fields.h2,
            rho0: ParticleState::from_measure(&self.rho0()?),
            nu0: ParticleState { time: 0.0, dim: self.dim, positions: nu0.coords().to_vec(), weights: nu0.weights().to_vec() },
            cost,
        })
    }

    /// The zero decision of the configured shape.
    pub fn decision_template(&self) -> Result<Decision> {
        let spec = self.control.as_ref().ok_or_else(|| Error::Validation("scenario has no control".into()))?;
        match spec {
            ControlSpec::Problem2 { knots, nodes, u_max, jump_cap } => {
                let bounds = self
                    .domain
                    .as_ref()
                    .map(|d| d.bounds.clone())
                    .ok_or_else(|| Error::Validation("problem2 needs a bounded domain".into()))?;
                let g = ControlGrid::zeros(bounds, nodes.clone(), *knots, self.horizon, *u_max)
                    .map_err(|e| Error::Validation(e.to_string()))?
                    .with_jump_cap(*jump_cap);
                Ok(Decision::Problem2(g))
            }
            ControlSpec::Problem1 { knots, max_mass, speed } => {
                let nu0 = self.nu0()?.unwrap_or_else(|| DiscreteMeasure::empty(self.dim));
                let p = NuParametrization::stationary(&nu0, *knots, self.horizon, *max_mass, *speed)
                    .map_err(|e| Error::Validation(e.to_string()))?;
                Ok(Decision::Problem1(p))
            }
        }
    }

    pub fn optimizer_config(&self) -> OptimizationConfig {
        let mut c = self.optimizer.clone().unwrap_or_default();
        if self.optimizer.is_none() {
            c.seed = self.seed;
        }
        c
    }
}
