//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Sources `0..m` carry supply, sinks `m..m+n` carry demand and an artificial
//! root closes the initial spanning tree. The leaving arc is chosen so the
//! tree stays strongly feasible (every zero-flow tree arc points towards the
//! root), which rules out cycling on degenerate pivots. Entering arcs are
//! priced with a block search.

use crate::error::{Error, Result};

const EPSILON: f64 = 1e-13;
const NONE: usize = usize::MAX;

/// Optimal flow and dual potentials of a transportation problem.
#[derive(Debug, Clone)]
pub(crate) struct TransportSolution {
    /// Nonzero `(source, sink, mass)` entries.
    pub flows: Vec<(usize, usize, f64)>,
    /// `Σ flow · cost`, summed over the nonzero entries.
    pub cost: f64,
    /// Source potentials `u` with `u_i + v_j ≤ c_ij`; only the optimality
    /// tests read them.
    #[allow(dead_code)]
    pub u: Vec<f64>,
    #[allow(dead_code)]
    pub v: Vec<f64>,
}

struct Solver<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    art_cost: Vec<f64>,
    art_up: Vec<bool>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    block: usize,
    next_arc: usize,
}

impl<'a> Solver<'a> {
    fn real_arcs(&self) -> usize {
        self.m * self.n
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    fn src(&self, e: usize) -> usize {
        let r = self.real_arcs();
        if e < r {
            e / self.n
        } else if self.art_up[e - r] {
            e - r
        } else {
            self.root()
        }
    }

    fn tgt(&self, e: usize) -> usize {
        let r = self.real_arcs();
        if e < r {
            self.m + e % self.n
        } else if self.art_up[e - r] {
            self.root()
        } else {
            e - r
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        let r = self.real_arcs();
        if e < r {
            self.cost[e]
        } else {
            self.art_cost[e - r]
        }
    }

    fn new(supply: &[f64], demand: &[f64], cost: &'a [f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let nodes = m + n;
        let root = nodes;
        let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let big = (max_cost + 1.0) * nodes as f64;

        let mut art_cost = vec![0.0; nodes];
        let mut art_up = vec![true; nodes];
        let mut flow = vec![0.0; m * n + nodes];
        let mut in_tree = vec![false; m * n + nodes];
        let mut pi = vec![0.0; nodes + 1];
        let mut parent = vec![root; nodes + 1];
        let mut pred = vec![NONE; nodes + 1];
        let mut up = vec![true; nodes + 1];
        let mut depth = vec![1; nodes + 1];
        parent[root] = NONE;
        depth[root] = 0;

        for u in 0..nodes {
            let s = if u < m { supply[u] } else { -demand[u - m] };
            let e = m * n + u;
            in_tree[e] = true;
            pred[u] = e;
            if s >= 0.0 {
                art_up[u] = true;
                art_cost[u] = 0.0;
                flow[e] = s;
                up[u] = true;
                pi[u] = 0.0;
            } else {
                art_up[u] = false;
                art_cost[u] = big;
                flow[e] = -s;
                up[u] = false;
                pi[u] = big;
            }
        }
        let mut children = vec![Vec::new(); nodes + 1];
        children[root] = (0..nodes).collect();

        let block = ((m * n) as f64).sqrt().ceil().max(10.0) as usize;
        Self {
            m,
            n,
            cost,
            art_cost,
            art_up,
            flow,
            in_tree,
            pi,
            parent,
            pred,
            up,
            depth,
            children,
            block,
            next_arc: 0,
        }
    }

    fn reduced_cost(&self, e: usize) -> (f64, f64) {
        let (s, t) = (e / self.n, self.m + e % self.n);
        let c = self.cost[e];
        let rc = c + self.pi[s] - self.pi[t];
        let scale = c.abs().max(self.pi[s].abs()).max(self.pi[t].abs());
        (rc, scale)
    }

    /// Block search over the real arcs; returns the entering arc.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.real_arcs();
        let mut best = NONE;
        let mut best_rc = 0.0;
        let mut best_scale = 0.0;
        let mut count = 0;
        for k in 0..total {
            let e = (self.next_arc + k) % total;
            if !self.in_tree[e] {
                let (rc, scale) = self.reduced_cost(e);
                if rc < best_rc {
                    best_rc = rc;
                    best = e;
                    best_scale = scale;
                }
            }
            count += 1;
            if count == self.block {
                if best != NONE && best_rc < -EPSILON * best_scale {
                    self.next_arc = (e + 1) % total;
                    return Some(best);
                }
                count = 0;
            }
        }
        if best != NONE && best_rc < -EPSILON * best_scale {
            self.next_arc = (best + 1) % total;
            Some(best)
        } else {
            None
        }
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    fn pivot(&mut self, e_in: usize) -> Result<()> {
        let first = self.src(e_in);
        let second = self.tgt(e_in);
        let join = self.join(first, second);

        // Last blocking arc in cycle order, starting from the join node.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    side = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if !self.up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    side = 2;
                }
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::Solver("unbounded transport cycle".into()));
        }
        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };

        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            u = second;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }
        let e_out = self.pred[u_out];
        self.flow[e_out] = 0.0;
        self.in_tree[e_out] = false;
        self.in_tree[e_in] = true;

        // Re-hang the subtree below the leaving arc from the entering arc.
        let mut stem = vec![u_in];
        while *stem.last().unwrap() != u_out {
            let p = self.parent[*stem.last().unwrap()];
            stem.push(p);
        }
        let old_pred: Vec<usize> = stem.iter().map(|&s| self.pred[s]).collect();
        let old_up: Vec<bool> = stem.iter().map(|&s| self.up[s]).collect();
        let v_out = self.parent[u_out];
        remove_child(&mut self.children[v_out], u_out);
        for i in 0..stem.len() - 1 {
            let (child, par) = (stem[i], stem[i + 1]);
            remove_child(&mut self.children[par], child);
            self.children[child].push(par);
            self.parent[par] = child;
            self.pred[par] = old_pred[i];
            self.up[par] = !old_up[i];
        }
        self.parent[u_in] = v_in;
        self.pred[u_in] = e_in;
        self.up[u_in] = self.src(e_in) == u_in;
        self.children[v_in].push(u_in);

        let mut stack = vec![u_in];
        while let Some(x) = stack.pop() {
            let p = self.parent[x];
            let c = self.arc_cost(self.pred[x]);
            self.depth[x] = self.depth[p] + 1;
            self.pi[x] = if self.up[x] { self.pi[p] - c } else { self.pi[p] + c };
            stack.extend_from_slice(&self.children[x]);
        }
        Ok(())
    }
}

fn remove_child(list: &mut Vec<usize>, child: usize) {
    if let Some(k) = list.iter().position(|&c| c == child) {
        list.swap_remove(k);
    }
}

/// Solves `min Σ c_ij x_ij` over `x ≥ 0` with row sums `supply` and column sums
/// `demand`. `cost` is row-major `m × n`; supply and demand must balance.
pub(crate) fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::EmptyMeasure);
    }
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch { expected: m * n, got: cost.len() });
    }
    let mut solver = Solver::new(supply, demand, cost);
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut iter = 0;
    while let Some(e) = solver.find_entering() {
        solver.pivot(e)?;
        iter += 1;
        if iter > max_iter {
            return Err(Error::Solver(format!("no convergence after {max_iter} pivots")));
        }
    }

    let mass: f64 = supply.iter().sum();
    let leftover = solver.flow[m * n..].iter().fold(0.0f64, |a, &f| a.max(f));
    if leftover > 1e-9 * mass.max(1.0) {
        return Err(Error::Solver(format!("infeasible: {leftover} mass on artificial arcs")));
    }

    let mut flows = Vec::new();
    let mut total = 0.0;
    for e in 0..m * n {
        let f = solver.flow[e];
        if f > 0.0 {
            flows.push((e / n, e % n, f));
            total += f * cost[e];
        }
    }
    let u = (0..m).map(|i| -solver.pi[i]).collect();
    let v = (0..n).map(|j| solver.pi[m + j]).collect();
    Ok(TransportSolution { flows, cost: total, u, v })
}
