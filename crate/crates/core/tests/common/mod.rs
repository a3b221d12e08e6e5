//! Test-only oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use mfc_core::measures::{dist, DiscreteMeasure};
use rustc_hash::FxHashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random measure with `n` atoms in `[-scale, scale]^dim` and total mass `mass`.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64, mass: f64) -> DiscreteMeasure {
    let coords: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w * mass / total).collect();
    DiscreteMeasure::new(dim, coords, weights).unwrap()
}

/// Minimum transport cost over all vertices of the transportation polytope.
///
/// Every basic feasible solution is obtained by repeatedly saturating a
/// row/column pair `(i, j)` with `min(a_i, b_j)` and retiring the exhausted
/// line, so exploring every such elimination sequence (memoized on the
/// residual state) visits every vertex. Supports up to 6 atoms per side.
pub fn vertex_enumeration_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    assert!(m <= MAX_SIDE && n <= MAX_SIDE, "oracle supports at most {MAX_SIDE} atoms per side");
    let mut cost = [[0.0; MAX_SIDE]; MAX_SIDE];
    for i in 0..m {
        for j in 0..n {
            cost[i][j] = dist(mu.point(i), nu.point(j)).powf(p);
        }
    }
    let mass = mu.total_mass();
    let mut a = [0.0; MAX_SIDE];
    let mut b = [0.0; MAX_SIDE];
    a[..m].copy_from_slice(mu.weights());
    for j in 0..n {
        b[j] = nu.weight(j) * mass / nu.total_mass();
    }
    let mut e = Enumerator { cost, m, n, eps: 1e-13 * mass.max(1.0), memo: FxHashMap::default() };
    e.eliminate(a, b)
}

const MAX_SIDE: usize = 6;

struct Enumerator {
    cost: [[f64; MAX_SIDE]; MAX_SIDE],
    m: usize,
    n: usize,
    eps: f64,
    memo: FxHashMap<[u64; 2 * MAX_SIDE], f64>,
}

impl Enumerator {
    fn eliminate(&mut self, a: [f64; MAX_SIDE], b: [f64; MAX_SIDE]) -> f64 {
        let mut key = [0u64; 2 * MAX_SIDE];
        let mut any_row = false;
        let mut any_col = false;
        for i in 0..self.m {
            if a[i] > self.eps {
                key[i] = a[i].to_bits();
                any_row = true;
            }
        }
        for j in 0..self.n {
            if b[j] > self.eps {
                key[MAX_SIDE + j] = b[j].to_bits();
                any_col = true;
            }
        }
        if !any_row || !any_col {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = f64::INFINITY;
        for i in 0..self.m {
            if a[i] <= self.eps {
                continue;
            }
            for j in 0..self.n {
                if b[j] <= self.eps {
                    continue;
                }
                let q = a[i].min(b[j]);
                let (mut a2, mut b2) = (a, b);
                if a[i] <= b[j] {
                    a2[i] = 0.0;
                    b2[j] -= q;
                } else {
                    b2[j] = 0.0;
                    a2[i] -= q;
                }
                let c = q * self.cost[i][j] + self.eliminate(a2, b2);
                best = best.min(c);
            }
        }
        self.memo.insert(key, best);
        best
    }
}

pub fn random_pair(rng: &mut ChaCha8Rng, max_atoms: usize, dim: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let m = rng.random_range(1..=max_atoms);
    let n = rng.random_range(1..=max_atoms);
    (random_measure(rng, m, dim, 3.0, 1.0), random_measure(rng, n, dim, 3.0, 1.0))
}

pub mod fixtures;
