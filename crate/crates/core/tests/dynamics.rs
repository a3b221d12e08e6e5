mod common;

use common::fixtures::{morse, suite};
use common::*;
use mfc_core::dynamics::*;
use mfc_core::kernels::{AdmissibleField, BoundFunction, KernelSpec};
use mfc_core::measures::{DiscreteMeasure, MeasureCurve};
use mfc_core::wasserstein::w1;
use mfc_core::Error;
use rand::Rng;

fn builtin(spec: KernelSpec, dim: usize) -> AdmissibleField {
    AdmissibleField::builtin(&spec, dim).unwrap()
}

fn lin(a: f64, dim: usize) -> AdmissibleField {
    builtin(KernelSpec::LinearAttraction { a }, dim)
}

fn drift(c: &[f64]) -> AdmissibleField {
    builtin(KernelSpec::ConstantDrift { c: c.to_vec() }, c.len())
}

fn state(points: &[Vec<f64>], weights: &[f64]) -> ParticleState {
    ParticleState::from_measure(&DiscreteMeasure::from_points(points, weights).unwrap())
}

fn cloud(seed: u64, n: usize, dim: usize, scale: f64) -> ParticleState {
    ParticleState::from_measure(&random_measure(&mut rng(seed), n, dim, scale, 1.0))
}

#[test]
fn rhs_examples() {
    let s = cloud(1, 5, 2, 1.0);
    let z = AdmissibleField::zero(2);
    for v in rhs_single(0.0, &s, &z, &drift(&[0.3, -0.7])) {
        assert_eq!(v, vec![0.3, -0.7]);
    }
    let mean = s.to_measure().mean().unwrap();
    for (i, v) in rhs_single(0.0, &s, &lin(1.0, 2), &z).iter().enumerate() {
        for k in 0..2 {
            assert!((v[k] - (mean[k] - s.point(i)[k])).abs() < 1e-14);
        }
    }
    let single = state(&[vec![0.4, 0.9]], &[1.0]);
    assert_eq!(rhs_single(0.0, &single, &lin(1.0, 2), &z), vec![vec![0.0, 0.0]]);
}

#[test]
fn boundary_examples() {
    let d = Domain::unit_box(2);
    let mut v = vec![0.4, -0.2];
    d.apply_boundary(&[0.5, 0.5], &mut v, 1e-9);
    assert_eq!(v, vec![0.4, -0.2]);
    let mut v = vec![1.0, 1.0];
    d.apply_boundary(&[1.0, 0.5], &mut v, 1e-9);
    assert_eq!(v, vec![0.0, 1.0]);
    let mut v = vec![-1.0, 1.0];
    d.apply_boundary(&[1.0, 0.5], &mut v, 1e-9);
    assert_eq!(v, vec![-1.0, 1.0]);
    let mut v = vec![1.0, 1.0];
    d.apply_boundary(&[1.0, 1.0], &mut v, 1e-9);
    assert_eq!(v, vec![0.0, 0.0]);

    let obstacle = Aabb::new(vec![0.4, 0.4], vec![0.6, 0.6]).unwrap();
    let d = Domain::new(Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), vec![obstacle]).unwrap();
    let mut v = vec![1.0, 0.3];
    d.apply_boundary(&[0.4, 0.5], &mut v, 1e-9);
    assert_eq!(v, vec![0.0, 0.3]);
    let mut v = vec![-1.0, 0.3];
    d.apply_boundary(&[0.4, 0.5], &mut v, 1e-9);
    assert_eq!(v, vec![-1.0, 0.3]);
    assert!(!d.contains(&[0.5, 0.5]));
}

#[test]
fn drift_is_exact() {
    let s = cloud(2, 6, 2, 2.0);
    let c = [0.5, -1.25];
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let cfg = SimConfig::new(0.01, 1.0, integrator);
        let tr = simulate_single(&s, &AdmissibleField::zero(2), &drift(&c), None, &cfg).unwrap();
        for (k, &t) in tr.times.iter().enumerate() {
            for i in 0..s.len() {
                for j in 0..2 {
                    let exact = s.point(i)[j] + c[j] * t;
                    assert!((tr.positions[k][2 * i + j] - exact).abs() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn linear_contraction_matches_closed_form() {
    let s = cloud(3, 9, 2, 2.0);
    let mean = s.to_measure().mean().unwrap();
    let cfg = SimConfig::new(1e-3, 1.0, Integrator::Rk4);
    let tr = simulate_single(&s, &lin(1.0, 2), &AdmissibleField::zero(2), None, &cfg).unwrap();
    assert_eq!(*tr.times.last().unwrap(), 1.0);
    let e = (-1.0f64).exp();
    let last = tr.last();
    for i in 0..s.len() {
        for j in 0..2 {
            let exact = mean[j] + e * (s.point(i)[j] - mean[j]);
            assert!((last.point(i)[j] - exact).abs() <= 1e-6);
        }
    }
}

#[test]
fn step_count_lands_on_horizon() {
    let cfg = SimConfig::new(0.3, 1.0, Integrator::Rk4);
    assert_eq!(cfg.steps(), 4);
    assert!((cfg.step() - 0.25).abs() < 1e-15);
    assert!(SimConfig::new(2.0, 1.0, Integrator::Rk4).validate().is_err());
    assert!(SimConfig::new(0.0, 1.0, Integrator::Rk4).validate().is_err());
}

#[test]
fn support_bound_holds_on_random_scenarios() {
    let mut r = rng(4);
    for case in 0..10 {
        let k = match case % 3 {
            0 => lin(r.random_range(0.1..2.0), 2),
            1 => builtin(KernelSpec::Morse { ca: 0.5, la: 1.0, cr: 0.3, lr: 0.4 }, 2),
            _ => builtin(KernelSpec::PowerRepulsion { c: 0.1, r0: 0.3, p: 1.0 }, 2),
        };
        let f = drift(&[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
        let s = cloud(r.random(), 8, 2, 1.5);
        let cfg = SimConfig::new(0.01, 1.0, Integrator::Rk4);
        let tr = simulate_single(&s, &k, &f, None, &cfg).unwrap();
        let delta = s.to_measure().support_radius().unwrap();
        let bound = support_bound_r(delta, &k.ell().add(f.ell()), 1.0);
        assert!(tr.max_radius() <= bound + 1e-6);
    }
}

#[test]
fn bound_formula_examples() {
    let one = BoundFunction::constant(1.0).unwrap();
    let r = support_bound_r(1.0, &one, 1.0);
    assert!((r - 3.0 * 1f64.exp().powi(3)).abs() < 1e-12);
    assert!((r - 60.2566).abs() < 1e-4);
    assert_eq!(support_bound_r(2.5, &BoundFunction::zero(), 3.0), 2.5);
    assert!(support_bound_r(1.0, &one, 2.0) > r);
    assert_eq!(lipschitz_constant_l(0.0, 1.0), 2.0);
    assert_eq!(lipschitz_constant_l(60.2566, 0.0), 0.0);
    assert!((lipschitz_constant_l(60.2566, 1.0) - 182.7698).abs() < 1e-9);
    let piece = BoundFunction::piecewise(vec![0.0, 0.5], vec![2.0, 0.0]).unwrap();
    assert!((support_bound_r(0.0, &piece, 1.0) - 2.0 * 3f64.exp()).abs() < 1e-12);
}

#[test]
fn coupled_decouples_bit_exactly() {
    let rho0 = cloud(5, 7, 2, 1.0);
    let nu0 = cloud(6, 3, 2, 1.0);
    let z = AdmissibleField::zero(2);
    let cfg = SimConfig::new(0.01, 1.0, Integrator::Rk4);
    let (rho, nu) = simulate_coupled(&rho0, &nu0, &morse(), &z, &z, &z, &z, None, &cfg).unwrap();
    let alone = simulate_single(&rho0, &morse(), &z, None, &cfg).unwrap();
    assert_eq!(rho.positions, alone.positions);
    assert!(nu.positions.iter().all(|p| *p == nu0.positions));

    let c = [0.2, -0.6];
    let (rho, nu) = simulate_coupled(&rho0, &nu0, &z, &z, &z, &z, &drift(&c), None, &cfg).unwrap();
    assert!(rho.positions.iter().all(|p| *p == rho0.positions));
    let last = nu.last();
    for i in 0..nu0.len() {
        for j in 0..2 {
            assert!((last.point(i)[j] - nu0.point(i)[j] - c[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn relabeling_nu_leaves_rho_unchanged() {
    let rho0 = cloud(7, 6, 2, 1.0);
    let pts = vec![vec![0.5, 0.1], vec![-0.2, 0.7], vec![0.9, -0.4]];
    let ws = [0.5, 0.25, 0.25];
    let nu_a = state(&pts, &ws);
    let nu_b = state(&[pts[2].clone(), pts[0].clone(), pts[1].clone()], &[ws[2], ws[0], ws[1]]);
    let cfg = SimConfig::new(0.02, 1.0, Integrator::Rk4);
    let z = AdmissibleField::zero(2);
    let (h1, h2) = (lin(0.8, 2), lin(0.3, 2));
    let (ra, _) = simulate_coupled(&rho0, &nu_a, &morse(), &z, &h1, &h2, &z, None, &cfg).unwrap();
    let (rb, _) = simulate_coupled(&rho0, &nu_b, &morse(), &z, &h1, &h2, &z, None, &cfg).unwrap();
    for (a, b) in ra.positions.iter().zip(&rb.positions) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn empirical_curve_examples() {
    let s = cloud(8, 4, 2, 1.0);
    let cfg = SimConfig::new(0.1, 1.0, Integrator::Rk4);
    let tr = simulate_single(&s, &lin(1.0, 2), &AdmissibleField::zero(2), None, &cfg).unwrap();
    let c = empirical_curve(&tr, 1).unwrap();
    assert_eq!(c.len(), 11);
    assert!(c.snapshots().iter().all(|m| m.total_mass() == s.to_measure().total_mass()));
    let c3 = empirical_curve(&tr, 3).unwrap();
    assert_eq!(c3.times().len(), 5);
    assert_eq!(*c3.times().last().unwrap(), 1.0);
    assert!(empirical_curve(&tr, 0).is_err());

    let z = AdmissibleField::zero(2);
    let still = simulate_single(&s, &z, &z, None, &cfg).unwrap();
    let c = empirical_curve(&still, 1).unwrap();
    assert_eq!(w1(c.first(), c.last()).unwrap(), 0.0);
}

#[test]
fn weights_and_trajectories_are_deterministic() {
    for f in suite() {
        let a = f.run(0.01);
        let b = f.run(0.01);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.positions, y.positions, "{}", f.name);
            assert_eq!(x.weights, f.initial[a.iter().position(|t| std::ptr::eq(t, x)).unwrap()].weights);
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = cloud(9, 90, 2, 1.0);
    let cfg = SimConfig::new(0.05, 1.0, Integrator::Rk4);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_single(&s, &morse(), &drift(&[0.1, 0.0]), None, &cfg).unwrap())
    };
    assert_eq!(run(1).positions, run(4).positions);
}

#[test]
fn confined_particles_stay_inside() {
    let d = Domain::unit_box(2);
    let mut r = rng(10);
    let pts: Vec<Vec<f64>> = (0..12).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
    let s = state(&pts, &[1.0 / 12.0; 12]);
    let cfg = SimConfig::new(0.01, 2.0, Integrator::Rk4);
    let tr = simulate_single(&s, &morse(), &drift(&[1.5, 0.7]), Some(&d), &cfg).unwrap();
    for p in &tr.positions {
        for x in p.chunks(2) {
            assert!(d.contains(x), "{x:?}");
        }
    }
    let last = tr.last();
    assert!(last.positions.chunks(2).any(|x| (x[0] - 1.0).abs() < 1e-6));

    let outside = state(&[vec![1.5, 0.5]], &[1.0]);
    assert!(simulate_single(&outside, &morse(), &AdmissibleField::zero(2), Some(&d), &cfg).is_err());
}

#[test]
fn nonfinite_velocity_is_a_simulation_error() {
    let bad = AdmissibleField::custom(1, "blowup", BoundFunction::constant(1.0).unwrap(), |t, _, out| {
        out[0] = if t > 0.5 { f64::NAN } else { 0.0 };
    });
    let s = state(&[vec![0.0]], &[1.0]);
    let cfg = SimConfig::new(0.1, 1.0, Integrator::Rk4);
    let err = simulate_single(&s, &AdmissibleField::zero(1), &bad, None, &cfg).unwrap_err();
    assert!(matches!(err, Error::Simulation { .. }));
}

#[test]
fn trajectory_csv_format() {
    let s = state(&[vec![0.0, 1.0], vec![2.0, 3.0]], &[0.25, 0.75]);
    let cfg = SimConfig::new(0.5, 1.0, Integrator::Euler);
    let tr = simulate_single(&s, &AdmissibleField::zero(2), &drift(&[1.0, 0.0]), None, &cfg).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,particle_id,x0,x1,w");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert_eq!(lines[1], "0,0,0,1,0.25");
    assert_eq!(lines[6], "1,1,3,3,0.75");
}

#[test]
fn static_curve_residual_vanishes() {
    let mu = random_measure(&mut rng(11), 5, 2, 1.0, 1.0);
    let times: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let curve = MeasureCurve::stationary(mu, times).unwrap();
    let battery = standard_battery(1.0, &[vec![0.0, 0.0], vec![0.5, -0.5]], 0.6);
    for t in &battery {
        assert!(weak_residual(&curve, |_, _, _| vec![0.0, 0.0], t).abs() < 1e-8);
    }
}

fn drift_residual(dt: f64, speed: f64) -> f64 {
    let c = [0.3, -0.2];
    let s = cloud(12, 6, 2, 1.0);
    let cfg = SimConfig::new(dt, 1.0, Integrator::Rk4);
    let tr = simulate_single(&s, &AdmissibleField::zero(2), &drift(&c), None, &cfg).unwrap();
    let curve = empirical_curve(&tr, 1).unwrap();
    let test = SeparableTest { horizon: 1.0, k: 1.0, power: 1, center: vec![0.2, 0.1], width: 0.8, tilt: vec![0.3, 0.0] };
    weak_residual(&curve, |_, _, _| vec![speed * c[0], speed * c[1]], &test).abs()
}

#[test]
fn drift_residual_converges_and_discriminates() {
    let coarse = drift_residual(1e-3, 1.0);
    let fine = drift_residual(5e-4, 1.0);
    assert!(coarse <= 1e-4, "{coarse}");
    assert!(coarse >= 4.0 * fine, "ratio {}", coarse / fine);
    assert!(drift_residual(1e-3, 2.0) > 10.0 * coarse);
}

#[test]
fn fixture_residuals_are_small() {
    for f in suite() {
        let trajs = f.run(1e-2);
        let centers: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.5, -0.3]];
        for pop in 0..trajs.len() {
            for t in standard_battery(1.0, &centers, 0.7) {
                let r = trajectory_residual(&f.system, &trajs, pop, 1e-9, &t).unwrap();
                assert!(r.abs() <= 1e-3, "{} pop {pop}: {r}", f.name);
            }
        }
    }
}

#[test]
fn convergence_table_examples() {
    let z = AdmissibleField::zero(1);
    let cfg = SimConfig::new(0.1, 1.0, Integrator::Rk4);
    let setup = StudySetup { kernel: &z, external: &z, domain: None, config: &cfg, stride: 1, seed: 3 };
    let fixed = DiscreteMeasure::new(1, vec![-1.0, 0.5, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
    let rows = convergence_study(|_, _| Ok(fixed.clone()), &[10, 20, 40], 2, &setup).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.sup_w1 == 0.0));

    let mut buf = Vec::new();
    write_convergence_csv(&rows, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("N,replicate,sup_t_W1\n10,0,0\n"));
    assert!(convergence_study(|_, _| Ok(fixed.clone()), &[20, 10], 2, &setup).is_err());
}

#[test]
fn linear_contraction_never_increases_distance() {
    let k = lin(1.0, 1);
    let z = AdmissibleField::zero(1);
    let cfg = SimConfig::new(0.01, 1.0, Integrator::Rk4);
    let mut r = rng(13);
    for n in 1..=8 {
        let a = cloud(r.random(), n, 1, 2.0);
        let b = cloud(r.random(), 8, 1, 2.0);
        let ca = empirical_curve(&simulate_single(&a, &k, &z, None, &cfg).unwrap(), 1).unwrap();
        let cb = empirical_curve(&simulate_single(&b, &k, &z, None, &cfg).unwrap(), 1).unwrap();
        let w0 = w1(ca.first(), cb.first()).unwrap();
        for (x, y) in ca.snapshots().iter().zip(cb.snapshots()) {
            assert!(w1(x, y).unwrap() <= w0 + 1e-9);
        }
    }
}
