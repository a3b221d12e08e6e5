//! Free-space dynamics fixtures shared by the dynamics and acceptance suites.

use mfc_core::dynamics::{ParticleState, ParticleSystem, SimConfig, Integrator, Trajectory};
use mfc_core::kernels::{AdmissibleField, KernelSpec};
use rand::Rng;

use super::rng;

pub struct Fixture {
    pub name: &'static str,
    pub system: ParticleSystem,
    pub initial: Vec<ParticleState>,
    /// Sum of the declared bounds acting on each population.
    pub ell: Vec<f64>,
}

fn builtin(spec: KernelSpec) -> AdmissibleField {
    AdmissibleField::builtin(&spec, 2).unwrap()
}

fn cloud(seed: u64, n: usize, radius: f64, mass: f64) -> ParticleState {
    let mut r = rng(seed);
    let mut positions = Vec::with_capacity(2 * n);
    while positions.len() < 2 * n {
        let p: [f64; 2] = [r.random_range(-radius..radius), r.random_range(-radius..radius)];
        if (p[0] * p[0] + p[1] * p[1]).sqrt() <= radius {
            positions.extend_from_slice(&p);
        }
    }
    ParticleState { time: 0.0, dim: 2, positions, weights: vec![mass / n as f64; n] }
}

pub fn morse() -> AdmissibleField {
    builtin(KernelSpec::Morse { ca: 1.0, la: 1.0, cr: 0.6, lr: 0.3 })
}

pub fn suite() -> Vec<Fixture> {
    let zero = AdmissibleField::zero(2);
    let lin = |a: f64| builtin(KernelSpec::LinearAttraction { a });
    let drift = |c: Vec<f64>| builtin(KernelSpec::ConstantDrift { c });
    let single = |name, k: AdmissibleField, f: AdmissibleField, init: ParticleState| {
        let ell = k.ell().sup(1.0) + f.ell().sup(1.0);
        Fixture { name, system: ParticleSystem::single(2, k, f, None), initial: vec![init], ell: vec![ell] }
    };
    let coupled = {
        let (k1, h1, k2, h2, u) = (morse(), lin(0.5), zero.clone(), lin(0.2), drift(vec![0.4, -0.1]));
        let ell = vec![
            k1.ell().sup(1.0) + h1.ell().sup(1.0),
            k2.ell().sup(1.0) + h2.ell().sup(1.0) + u.ell().sup(1.0),
        ];
        Fixture {
            name: "coupled",
            system: ParticleSystem::coupled(2, k1, h1, k2, h2, u, None),
            initial: vec![cloud(31, 10, 1.0, 1.0), cloud(32, 3, 0.5, 1.0)],
            ell,
        }
    };
    vec![
        single("linear", lin(1.0), zero.clone(), cloud(21, 12, 1.0, 1.0)),
        single("morse_drift", morse(), drift(vec![0.3, -0.2]), cloud(22, 12, 1.0, 1.0)),
        single(
            "repulsion_confined",
            builtin(KernelSpec::PowerRepulsion { c: 0.05, r0: 0.2, p: 1.0 }),
            lin(0.5),
            cloud(23, 12, 1.0, 1.0),
        ),
        coupled,
    ]
}

impl Fixture {
    pub fn run(&self, dt: f64) -> Vec<Trajectory> {
        self.system.simulate(&self.initial, &SimConfig::new(dt, 1.0, Integrator::Rk4)).unwrap()
    }

    pub fn delta_b(&self, pop: usize) -> f64 {
        self.initial[pop].to_measure().support_radius().unwrap()
    }
}
