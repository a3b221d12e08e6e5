use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::domain::Domain;
use crate::error::{Error, Result};
use crate::kernels::AdmissibleField;
use crate::measures::{dist, norm, DiscreteMeasure, MeasureCurve};

/// Below this many pair interactions per right-hand side the velocity loop
/// runs serially.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_tol")]
    pub boundary_tol: f64,
}

fn default_tol() -> f64 {
    1e-9
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, integrator: Integrator) -> Self {
        Self { dt, horizon, integrator, boundary_tol: default_tol() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(Error::InvalidParameter("dt must lie in (0, T]".into()));
        }
        if !(self.boundary_tol >= 0.0) {
            return Err(Error::InvalidParameter("boundary tolerance must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Number of steps; the step is shrunk so the last one lands on `T`.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
}

/// Positions (flat, `N × d`) and fixed weights at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub time: f64,
    pub dim: usize,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleState {
    pub fn from_measure(mu: &DiscreteMeasure) -> Self {
        Self { time: 0.0, dim: mu.dim(), positions: mu.coords().to_vec(), weights: mu.weights().to_vec() }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.dim, self.positions.clone(), self.weights.clone())
            .expect("particle state holds a valid measure")
    }
}

/// One population: the kernels it feels from each source population plus an
/// external field.
#[derive(Debug, Clone)]
pub struct Population {
    pub interactions: Vec<(usize, AdmissibleField)>,
    pub external: AdmissibleField,
}

/// Interacting populations moving in a common space, optionally confined to
/// a domain with reflecting walls.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub dim: usize,
    pub populations: Vec<Population>,
    pub domain: Option<Domain>,
}

/// Time-sampled particle positions on a uniform grid from 0 to `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub clamp_events: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn particles(&self) -> usize {
        self.weights.len()
    }

    pub fn state(&self, k: usize) -> ParticleState {
        ParticleState {
            time: self.times[k],
            dim: self.dim,
            positions: self.positions[k].clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn last(&self) -> ParticleState {
        self.state(self.len() - 1)
    }

    /// `max_{t,i} |x_i(t)|`.
    pub fn max_radius(&self) -> f64 {
        self.positions
            .iter()
            .flat_map(|p| p.chunks(self.dim.max(1)).map(norm))
            .fold(0.0, f64::max)
    }

    /// Largest single-particle displacement between consecutive samples.
    pub fn max_step_displacement(&self) -> f64 {
        let d = self.dim.max(1);
        self.positions
            .windows(2)
            .flat_map(|w| w[0].chunks(d).zip(w[1].chunks(d)).map(|(a, b)| dist(a, b)))
            .fold(0.0, f64::max)
    }

    /// Writes `t,particle_id,x0..,w` rows, one per (time, particle).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write_header(&mut out, self.dim)?;
        for (t, pos) in self.times.iter().zip(&self.positions) {
            write_rows(&mut out, *t, self.dim, pos, &self.weights)?;
        }
        Ok(())
    }
}

fn write_header<W: Write>(out: &mut W, dim: usize) -> Result<()> {
    let coords: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
    writeln!(out, "t,particle_id,{},w", coords.join(","))?;
    Ok(())
}

fn write_rows<W: Write>(out: &mut W, t: f64, dim: usize, pos: &[f64], weights: &[f64]) -> Result<()> {
    for (i, w) in weights.iter().enumerate() {
        write!(out, "{t},{i}")?;
        for x in &pos[i * dim..(i + 1) * dim] {
            write!(out, ",{x}")?;
        }
        writeln!(out, ",{w}")?;
    }
    Ok(())
}

/// Writes a measure curve in the trajectory CSV format; weights may vary
/// from snapshot to snapshot.
pub fn write_curve_csv<W: Write>(curve: &MeasureCurve, mut out: W) -> Result<()> {
    let dim = curve.first().dim();
    write_header(&mut out, dim)?;
    for (t, m) in curve.times().iter().zip(curve.snapshots()) {
        write_rows(&mut out, *t, dim, m.coords(), m.weights())?;
    }
    Ok(())
}

/// Snapshots every `stride` steps, always including the final time.
pub fn empirical_curve(traj: &Trajectory, stride: usize) -> Result<MeasureCurve> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let mut idx: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    if *idx.last().unwrap() != traj.len() - 1 {
        idx.push(traj.len() - 1);
    }
    let times = idx.iter().map(|&k| traj.times[k]).collect();
    let snaps = idx
        .iter()
        .map(|&k| DiscreteMeasure::new(traj.dim, traj.positions[k].clone(), traj.weights.clone()))
        .collect::<Result<Vec<_>>>()?;
    MeasureCurve::new(times, snaps)
}

impl ParticleSystem {
    pub fn single(dim: usize, kernel: AdmissibleField, external: AdmissibleField, domain: Option<Domain>) -> Self {
        Self { dim, populations: vec![Population { interactions: vec![(0, kernel)], external }], domain }
    }

    /// Population 0 is `ρ`, driven by `K1*ρ + H1*ν`; population 1 is `ν`,
    /// driven by `K2*ρ + H2*ν + u`.
    #[allow(clippy::too_many_arguments)]
    pub fn coupled(
        dim: usize,
        k1: AdmissibleField,
        h1: AdmissibleField,
        k2: AdmissibleField,
        h2: AdmissibleField,
        u: AdmissibleField,
        domain: Option<Domain>,
    ) -> Self {
        Self {
            dim,
            populations: vec![
                Population { interactions: vec![(0, k1), (1, h1)], external: AdmissibleField::zero(dim) },
                Population { interactions: vec![(0, k2), (1, h2)], external: u },
            ],
            domain,
        }
    }

    /// Velocity of population `pop` at `x`, given every population's
    /// positions and weights, with the boundary projection applied.
    pub fn velocity_at(
        &self,
        pop: usize,
        t: f64,
        positions: &[&[f64]],
        weights: &[&[f64]],
        x: &[f64],
        tol: f64,
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let p = &self.populations[pop];
        for (src, k) in &p.interactions {
            if !k.is_zero() {
                k.add_convolution(t, x, positions[*src], weights[*src], out);
            }
        }
        if !p.external.is_zero() {
            p.external.add_scaled(t, x, 1.0, out);
        }
        if let Some(dom) = &self.domain {
            dom.apply_boundary(x, out, tol);
        }
    }

    fn rhs(&self, t: f64, positions: &[Vec<f64>], weights: &[&[f64]], tol: f64, out: &mut [Vec<f64>]) {
        let d = self.dim;
        let pos: Vec<&[f64]> = positions.iter().map(|p| p.as_slice()).collect();
        for (pop, o) in out.iter_mut().enumerate() {
            let n = weights[pop].len();
            let work: usize = self.populations[pop]
                .interactions
                .iter()
                .filter(|(_, k)| !k.is_zero())
                .map(|(s, _)| weights[*s].len())
                .sum::<usize>()
                * n;
            let eval = |(i, v): (usize, &mut [f64])| {
                let x = &pos[pop][i * d..(i + 1) * d];
                self.velocity_at(pop, t, &pos, weights, x, tol, v);
            };
            if work >= PARALLEL_THRESHOLD {
                o.par_chunks_mut(d).enumerate().for_each(eval);
            } else {
                o.chunks_mut(d).enumerate().for_each(eval);
            }
        }
    }

    fn check_initial(&self, init: &[ParticleState]) -> Result<()> {
        if init.len() != self.populations.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} initial states, got {}",
                self.populations.len(),
                init.len()
            )));
        }
        for s in init {
            if s.dim != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: s.dim });
            }
            if s.positions.len() != s.weights.len() * s.dim {
                return Err(Error::InvalidParameter("positions and weights disagree in length".into()));
            }
            if let Some(dom) = &self.domain {
                if let Some(i) = (0..s.len()).find(|&i| !dom.contains(s.point(i))) {
                    return Err(Error::InvalidParameter(format!(
                        "particle {i} at {:?} starts outside the domain",
                        s.point(i)
                    )));
                }
            }
        }
        for (p, pop) in self.populations.iter().enumerate() {
            for (src, k) in &pop.interactions {
                if *src >= self.populations.len() || k.dim() != self.dim {
                    return Err(Error::InvalidParameter(format!("population {p} has a bad interaction")));
                }
            }
        }
        Ok(())
    }

    /// Fixed-step integration from `t = 0` to `T`. Deterministic: the result
    /// does not depend on the number of worker threads.
    pub fn simulate(&self, init: &[ParticleState], config: &SimConfig) -> Result<Vec<Trajectory>> {
        config.validate()?;
        self.check_initial(init)?;
        let steps = config.steps();
        let h = config.step();
        let tol = config.boundary_tol;
        let weights: Vec<&[f64]> = init.iter().map(|s| s.weights.as_slice()).collect();
        let mut x: Vec<Vec<f64>> = init.iter().map(|s| s.positions.clone()).collect();
        let mut trajs: Vec<Trajectory> = init
            .iter()
            .map(|s| Trajectory {
                dim: self.dim,
                times: Vec::with_capacity(steps + 1),
                positions: Vec::with_capacity(steps + 1),
                weights: s.weights.clone(),
                clamp_events: 0,
            })
            .collect();
        for (tr, p) in trajs.iter_mut().zip(&x) {
            tr.times.push(0.0);
            tr.positions.push(p.clone());
        }

        let zeros = || x.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        let mut k1 = zeros();
        let (mut k2, mut k3, mut k4, mut stage) = (zeros(), zeros(), zeros(), zeros());
        let axpy = |base: &[Vec<f64>], a: f64, k: &[Vec<f64>], out: &mut [Vec<f64>]| {
            for ((o, b), kk) in out.iter_mut().zip(base).zip(k) {
                for ((oi, bi), ki) in o.iter_mut().zip(b).zip(kk) {
                    *oi = bi + a * ki;
                }
            }
        };

        for n in 0..steps {
            let t = n as f64 * h;
            match config.integrator {
                Integrator::Euler => {
                    self.rhs(t, &x, &weights, tol, &mut k1);
                    for (p, k) in x.iter_mut().zip(&k1) {
                        for (pi, ki) in p.iter_mut().zip(k) {
                            *pi += h * ki;
                        }
                    }
                }
                Integrator::Rk4 => {
                    self.rhs(t, &x, &weights, tol, &mut k1);
                    axpy(&x, 0.5 * h, &k1, &mut stage);
                    self.rhs(t + 0.5 * h, &stage, &weights, tol, &mut k2);
                    axpy(&x, 0.5 * h, &k2, &mut stage);
                    self.rhs(t + 0.5 * h, &stage, &weights, tol, &mut k3);
                    axpy(&x, h, &k3, &mut stage);
                    self.rhs(t + h, &stage, &weights, tol, &mut k4);
                    for (pop, p) in x.iter_mut().enumerate() {
                        for (c, pi) in p.iter_mut().enumerate() {
                            *pi += h / 6.0 * (k1[pop][c] + 2.0 * k2[pop][c] + 2.0 * k3[pop][c] + k4[pop][c]);
                        }
                    }
                }
            }
            let t_next = if n + 1 == steps { config.horizon } else { (n + 1) as f64 * h };
            for (pop, p) in x.iter_mut().enumerate() {
                if let Some(i) = p.iter().position(|v| !v.is_finite()) {
                    let who = i / self.dim;
                    return Err(Error::Simulation {
                        time: t_next,
                        reason: format!(
                            "population {pop} particle {who} left every bounded set; last position {:?}",
                            &trajs[pop].positions.last().unwrap()[who * self.dim..(who + 1) * self.dim]
                        ),
                    });
                }
                if let Some(dom) = &self.domain {
                    for q in p.chunks_mut(self.dim) {
                        if dom.clamp(q) {
                            trajs[pop].clamp_events += 1;
                        }
                    }
                }
            }
            for (tr, p) in trajs.iter_mut().zip(&x) {
                tr.times.push(t_next);
                tr.positions.push(p.clone());
            }
        }
        Ok(trajs)
    }
}

/// `ẋ_i = Σ_j w_j K(t, x_i − x_j) + f(t, x_i)`, self term included.
pub fn rhs_single(t: f64, state: &ParticleState, kernel: &AdmissibleField, f: &AdmissibleField) -> Vec<Vec<f64>> {
    let sys = ParticleSystem::single(state.dim, kernel.clone(), f.clone(), None);
    let pos = [state.positions.as_slice()];
    let w = [state.weights.as_slice()];
    (0..state.len())
        .map(|i| {
            let mut v = vec![0.0; state.dim];
            sys.velocity_at(0, t, &pos, &w, state.point(i), 0.0, &mut v);
            v
        })
        .collect()
}

pub fn simulate_single(
    initial: &ParticleState,
    kernel: &AdmissibleField,
    f: &AdmissibleField,
    domain: Option<&Domain>,
    config: &SimConfig,
) -> Result<Trajectory> {
    let sys = ParticleSystem::single(initial.dim, kernel.clone(), f.clone(), domain.cloned());
    Ok(sys.simulate(std::slice::from_ref(initial), config)?.remove(0))
}

/// The two-population system; returns `(ρ, ν)` trajectories.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    rho0: &ParticleState,
    nu0: &ParticleState,
    k1: &AdmissibleField,
    k2: &AdmissibleField,
    h1: &AdmissibleField,
    h2: &AdmissibleField,
    u: &AdmissibleField,
    domain: Option<&Domain>,
    config: &SimConfig,
) -> Result<(Trajectory, Trajectory)> {
    let sys = ParticleSystem::coupled(
        rho0.dim,
        k1.clone(),
        h1.clone(),
        k2.clone(),
        h2.clone(),
        u.clone(),
        domain.cloned(),
    );
    let mut out = sys.simulate(&[rho0.clone(), nu0.clone()], config)?;
    let nu = out.pop().unwrap();
    let rho = out.pop().unwrap();
    Ok((rho, nu))
}
