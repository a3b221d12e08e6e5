mod common;

use common::*;
use mfc_core::control::ControlGrid;
use mfc_core::dynamics::Aabb;
use mfc_core::functionals::*;
use mfc_core::kernels::BoundFunction;
use mfc_core::measures::{dist, DiscreteMeasure, MeasureCurve};
use mfc_core::wasserstein::w1;
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-10;

fn grid_times(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

fn fixed(points: &[Vec<f64>], weights: &[f64], horizon: f64) -> MeasureCurve {
    let mu = DiscreteMeasure::from_points(points, weights).unwrap();
    MeasureCurve::stationary(mu, grid_times(horizon, 8)).unwrap()
}

fn moving(seed: u64, n: usize, dim: usize, steps: usize) -> MeasureCurve {
    let mut r = rng(seed);
    let base = random_measure(&mut r, n, dim, 1.0, 1.0);
    let vel: Vec<f64> = (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let times = grid_times(1.0, steps);
    let snaps = times
        .iter()
        .map(|t| {
            let coords = base.coords().iter().zip(&vel).map(|(x, v)| x + t * v).collect();
            DiscreteMeasure::new(dim, coords, base.weights().to_vec()).unwrap()
        })
        .collect();
    MeasureCurve::new(times, snaps).unwrap()
}

/// Trapezoid rule written out independently of the library helper.
fn trap(curve: &MeasureCurve, f: impl Fn(f64, &DiscreteMeasure) -> f64) -> f64 {
    let t = curve.times();
    let s = curve.snapshots();
    (1..t.len()).map(|k| 0.5 * (t[k] - t[k - 1]) * (f(t[k - 1], &s[k - 1]) + f(t[k], &s[k]))).sum()
}

fn unit_region() -> EvacuationSet {
    EvacuationSet::new(vec![Aabb::new(vec![0.0, 0.0], vec![0.5, 1.0]).unwrap()])
}

fn unit_grid(values: f64) -> ControlGrid {
    let g = ControlGrid::zeros(Aabb::new(vec![0.0, 0.0], vec![2.0, 1.5]).unwrap(), vec![3, 4], 5, 2.0, 10.0).unwrap();
    let n = g.values.len();
    g.with_params(&(0..n).map(|i| if i % 2 == 0 { values } else { -0.5 * values }).collect::<Vec<_>>())
}

#[test]
fn manpower_examples() {
    let one = BoundFunction::constant(1.0).unwrap();
    let home = fixed(&[vec![1.0, -1.0]], &[1.0], 1.0);
    let c = BoundFunction::piecewise(vec![0.0, 0.5], vec![3.0, 0.2]).unwrap();
    assert!(manpower_cost(&home, &c, &[1.0, -1.0], 2.0).abs() <= TOL);
    let away = fixed(&[vec![0.0, 2.0]], &[1.0], 1.0);
    assert!((manpower_cost(&away, &one, &[0.0, 0.0], 1.0) - 2.0).abs() <= TOL);
    let c = moving(1, 4, 2, 10);
    let mass = c.first().total_mass();
    assert!((manpower_cost(&c, &one, &[0.3, 0.3], 0.0) - mass).abs() <= TOL);
}

#[test]
fn manpower_matches_direct_sum() {
    let c = moving(2, 5, 2, 12);
    let profile = BoundFunction::piecewise(vec![0.0, 0.4], vec![1.5, 0.5]).unwrap();
    let x0 = [0.2, -0.1];
    let direct = trap(&c, |t, m| profile.at(t) * m.atoms().map(|(x, w)| w * dist(x, &x0).powf(1.5)).sum::<f64>());
    assert!((manpower_cost(&c, &profile, &x0, 1.5) - direct).abs() <= TOL);
}

#[test]
fn alignment_examples() {
    let c = fixed(&[vec![7.0, 1.0], vec![-2.0, 3.0]], &[0.5, 0.5], 1.0);
    assert!((alignment_cost(&c, &[1]).unwrap() - 1.0).abs() <= TOL);
    let consensus = fixed(&[vec![7.0, 4.0], vec![-2.0, 4.0], vec![0.0, 4.0]], &[0.2, 0.3, 0.5], 1.0);
    assert!(alignment_cost(&consensus, &[1]).unwrap().abs() <= TOL);
    for lambda in [0.5, 2.0, 3.0] {
        let scaled = fixed(&[vec![7.0, lambda], vec![-2.0, 3.0 * lambda]], &[0.5, 0.5], 1.0);
        assert!((alignment_cost(&scaled, &[1]).unwrap() - lambda * lambda).abs() <= TOL);
    }
}

#[test]
fn alignment_matches_variance() {
    let c = moving(3, 6, 3, 10);
    let direct = trap(&c, |_, m| {
        let mean: Vec<f64> = [0, 2].iter().map(|&k| m.atoms().map(|(x, w)| w * x[k]).sum()).collect();
        m.atoms().map(|(x, w)| w * ((x[0] - mean[0]).powi(2) + (x[2] - mean[1]).powi(2))).sum()
    });
    assert!((alignment_cost(&c, &[0, 2]).unwrap() - direct).abs() <= TOL);
}

#[test]
fn evacuation_examples() {
    let half = fixed(&[vec![0.25, 0.5], vec![0.75, 0.5]], &[0.5, 0.5], 2.0);
    assert!((evacuation_cost(&half, &unit_region()) - 1.0).abs() <= TOL);
    assert_eq!(evacuation_cost(&half, &EvacuationSet::default()), 0.0);
    let inside = fixed(&[vec![0.1, 0.1], vec![0.5, 1.0]], &[0.5, 0.5], 3.0);
    assert!((evacuation_cost(&inside, &unit_region()) - 3.0).abs() <= TOL);
}

#[test]
fn evacuation_is_monotone_in_region() {
    let c = moving(4, 10, 2, 10);
    let small = EvacuationSet::new(vec![Aabb::new(vec![-0.5, -0.5], vec![0.2, 0.2]).unwrap()]);
    let big = EvacuationSet::new(vec![
        Aabb::new(vec![-0.5, -0.5], vec![0.2, 0.2]).unwrap(),
        Aabb::new(vec![0.0, -2.0], vec![2.0, 0.0]).unwrap(),
    ]);
    let a = evacuation_cost(&c, &small);
    let b = evacuation_cost(&c, &big);
    assert!(a <= b);
    let direct = trap(&c, |_, m| m.atoms().filter(|(x, _)| big.contains(x)).map(|(_, w)| w).sum());
    assert!((b - direct).abs() <= TOL);
}

#[test]
fn tracking_examples() {
    let c = fixed(&[vec![0.0]], &[1.0], 1.0);
    let target = DiscreteMeasure::dirac(&[3.0], 1.0).unwrap();
    assert!((w1_tracking_cost(&c, &target).unwrap() - 3.0).abs() <= TOL);
    assert!((w1_terminal_cost(&c, &target).unwrap() - 3.0).abs() <= TOL);
    let m = moving(5, 4, 2, 6);
    assert_eq!(w1_terminal_cost(&m, m.last()).unwrap(), 0.0);
    let same = MeasureCurve::stationary(target.clone(), grid_times(1.0, 4)).unwrap();
    assert_eq!(w1_tracking_cost(&same, &target).unwrap(), 0.0);
    let wrong_mass = DiscreteMeasure::dirac(&[3.0], 2.0).unwrap();
    assert!(w1_terminal_cost(&c, &wrong_mass).is_err());
}

#[test]
fn tracking_averaging_bound() {
    let m = moving(6, 4, 2, 10);
    let target = random_measure(&mut rng(7), 3, 2, 1.0, 1.0);
    let track = w1_tracking_cost(&m, &target).unwrap();
    let each: Vec<f64> = m.snapshots().iter().map(|s| w1(s, &target).unwrap()).collect();
    let min = each.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(track / m.horizon() >= min - TOL);
    assert!((track - trap(&m, |_, s| w1(s, &target).unwrap())).abs() <= TOL);
}

#[test]
fn interaction_examples() {
    let sq = |x: &[f64], y: &[f64]| PairKernel::SquaredDistance.eval(x, y);
    let c = fixed(&[vec![0.0], vec![2.0]], &[0.5, 0.5], 1.0);
    assert!((interaction_cost(&c, sq) - 2.0).abs() <= TOL);
    let one = fixed(&[vec![4.0]], &[1.0], 1.0);
    assert_eq!(interaction_cost(&one, sq), 0.0);

    let neg = |x: &[f64], y: &[f64]| PairKernel::NegativeDistance.eval(x, y);
    let tight = fixed(&[vec![0.0], vec![0.1], vec![0.2]], &[1.0 / 3.0; 3], 1.0);
    let spread = fixed(&[vec![0.0], vec![1.0], vec![2.0]], &[1.0 / 3.0; 3], 1.0);
    assert!(interaction_cost(&spread, neg) < interaction_cost(&tight, neg));
}

#[test]
fn interaction_lower_bound_on_a_box() {
    let c = moving(8, 6, 2, 10);
    let radius = c.snapshots().iter().map(|m| m.support_radius().unwrap()).fold(0.0, f64::max);
    let sup_q = 2.0 * radius;
    let mass = c.first().total_mass();
    let neg = |x: &[f64], y: &[f64]| PairKernel::NegativeDistance.eval(x, y);
    assert!(interaction_cost(&c, neg) >= -sup_q * mass * mass * c.horizon() - TOL);
}

#[test]
fn atom_count_examples() {
    let three = fixed(&[vec![0.0], vec![1.0], vec![1.0]], &[0.2, 0.3, 0.5], 2.0);
    assert!((atom_count_cost(&three, 0.0, false) - 6.0).abs() <= TOL);
    assert!((atom_count_cost(&three, 0.0, true) - 4.0).abs() <= TOL);
    assert_eq!(atom_count_cost(&three, 0.5, false), 0.0);
}

#[test]
fn control_energy_examples() {
    let zero = unit_grid(0.0);
    assert_eq!(control_energy(&zero, 2.0), 0.0);
    let mut constant = zero.clone();
    let c = [0.6, -0.8];
    for v in constant.values.chunks_mut(2) {
        v.copy_from_slice(&c);
    }
    let volume = 2.0 * 1.5;
    for p in [1.0, 2.0, 3.0] {
        assert!((control_energy(&constant, p) - volume * 2.0 * 1f64.powf(p)).abs() <= TOL);
    }
    let u = unit_grid(0.7);
    let u2 = u.with_params(&u.values.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    for p in [1.0, 2.0, 2.5] {
        assert!((control_energy(&u2, p) - 2f64.powf(p) * control_energy(&u, p)).abs() <= TOL * control_energy(&u2, p));
    }
}

#[test]
fn composite_examples() {
    let c = moving(9, 5, 2, 10);
    let region = unit_region();
    let target = random_measure(&mut rng(10), 3, 2, 1.0, 1.0);
    let evac = CostTerm { functional: Functional::Evacuation { region: region.clone() }, weight: 1.0 };
    let term = CostTerm { functional: Functional::W1Terminal { target: target.clone() }, weight: 2.0 };

    let single = CompositeCost::new(vec![evac.clone()]).unwrap();
    let b = composite_cost(&single, Some(&c), None, None).unwrap();
    assert_eq!(b.total, evacuation_cost(&c, &region));

    let zeroed = CompositeCost::new(vec![
        CostTerm { weight: 0.0, ..evac.clone() },
        CostTerm { weight: 0.0, ..term.clone() },
    ])
    .unwrap();
    assert_eq!(composite_cost(&zeroed, Some(&c), None, None).unwrap().total, 0.0);

    let both = CompositeCost::new(vec![evac, term]).unwrap();
    let b = composite_cost(&both, Some(&c), None, None).unwrap();
    let direct = trap(&c, |_, m| m.atoms().filter(|(x, _)| region.contains(x)).map(|(_, w)| w).sum())
        + 2.0 * w1(c.last(), &target).unwrap();
    assert!((b.total - direct).abs() <= TOL);
    assert_eq!(b.terms.iter().map(|t| t.weight * t.value).sum::<f64>(), b.total);
    assert_eq!(b.terms[1].kind, "w1_terminal");
}

#[test]
fn composite_rejects_bad_terms() {
    let bad = CostTerm { functional: Functional::AtomCount { eps: 0.0, merge: false }, weight: -1.0 };
    assert!(CompositeCost::new(vec![bad.clone()]).is_err());
    assert!(CompositeCost::new(vec![CostTerm { weight: f64::NAN, ..bad }]).is_err());
    let energy = CompositeCost::new(vec![CostTerm { functional: Functional::ControlEnergy { p: 2.0 }, weight: 1.0 }]).unwrap();
    assert!(energy.uses_control());
    assert!(composite_cost(&energy, None, None, None).is_err());
}

#[test]
fn functional_spec_json() {
    let spec = r#"{"terms":[
        {"kind":"evacuation","weight":1,"params":{"region":{"boxes":[{"lo":[0,0],"hi":[0.5,1]}]}}},
        {"kind":"manpower","weight":0.5,"params":{"x0":[1,0.5],"p":2}},
        {"kind":"alignment","weight":0.1,"params":{"coords":[1]}},
        {"kind":"atom_count","weight":0.01,"params":{"eps":1e-6,"merge":true}},
        {"kind":"control_energy","weight":0.01,"params":{"p":2}}
    ]}"#;
    let cost: CompositeCost = serde_json::from_str(spec).unwrap();
    cost.validate().unwrap();
    let names: Vec<_> = cost.terms.iter().map(|t| t.functional.name()).collect();
    assert_eq!(names, ["evacuation", "manpower", "alignment", "atom_count", "control_energy"]);
    let back: CompositeCost = serde_json::from_str(&serde_json::to_string(&cost).unwrap()).unwrap();
    assert_eq!(back, cost);
    assert!(serde_json::from_str::<CompositeCost>(r#"{"terms":[{"kind":"nope","weight":1,"params":{}}]}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nonnegative_functionals(seed in any::<u64>()) {
        let c = moving(seed, 5, 2, 6);
        let one = BoundFunction::constant(1.0).unwrap();
        prop_assert!(manpower_cost(&c, &one, &[0.0, 0.0], 2.0) >= 0.0);
        prop_assert!(alignment_cost(&c, &[0, 1]).unwrap() >= 0.0);
        prop_assert!(evacuation_cost(&c, &unit_region()) >= 0.0);
        prop_assert!(atom_count_cost(&c, 0.0, false) >= 0.0);
        prop_assert!(interaction_cost(&c, |x, y| PairKernel::SquaredDistance.eval(x, y)) >= 0.0);
    }

    #[test]
    fn energy_is_convex(a in prop::collection::vec(-1.0f64..1.0, 120), b in prop::collection::vec(-1.0f64..1.0, 120), p in 1.0f64..4.0) {
        let g = unit_grid(0.0);
        let (u1, u2) = (g.with_params(&a[..g.values.len()]), g.with_params(&b[..g.values.len()]));
        let mid: Vec<f64> = u1.values.iter().zip(&u2.values).map(|(x, y)| 0.5 * (x + y)).collect();
        let lhs = control_energy(&g.with_params(&mid), p);
        prop_assert!(lhs <= 0.5 * (control_energy(&u1, p) + control_energy(&u2, p)) + 1e-12);
    }

    #[test]
    fn manpower_is_lipschitz_in_positions(seed in any::<u64>(), delta in 0.0f64..0.1) {
        // p = 1, c ≡ 1: moving every atom by δ changes the cost by at most mass·T·δ.
        let c = moving(seed, 4, 2, 6);
        let shifted = MeasureCurve::new(
            c.times().to_vec(),
            c.snapshots().iter().map(|m| m.push_forward(|x| vec![x[0] + delta, x[1]]).unwrap()).collect(),
        ).unwrap();
        let one = BoundFunction::constant(1.0).unwrap();
        let gap = (manpower_cost(&c, &one, &[0.0, 0.0], 1.0) - manpower_cost(&shifted, &one, &[0.0, 0.0], 1.0)).abs();
        prop_assert!(gap <= c.first().total_mass() * c.horizon() * delta + 1e-12);
    }
}
