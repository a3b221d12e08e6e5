//! Finite atomic measures on R^d.
//!
//! A [`DiscreteMeasure`] is a multiset of weighted atoms. Coincident atoms are
//! never merged implicitly: particle identity has to survive along a
//! [`MeasureCurve`], so every operation here is correct on multisets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used by mass-conservation checks.
pub const MASS_TOL: f64 = 1e-12;

/// Weighted atoms in R^d, stored as flat coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureLiteral", into = "MeasureLiteral")]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

/// Which factor of a product space a marginal projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    First,
    Second,
}

impl DiscreteMeasure {
    /// Builds a measure from flat coordinates (`weights.len() * dim` entries).
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: coords.len(),
            });
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coordinate {c}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("invalid weight {w}")));
        }
        Ok(Self { dim, coords, weights })
    }

    /// Builds a measure from a list of points and weights.
    pub fn from_points(points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or(Error::EmptyMeasure)?;
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords, weights.to_vec())
    }

    /// Uniform empirical measure `(1/N) Σ δ_{x_i}` over flat coordinates.
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { coords.len() / dim };
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::new(dim, coords, vec![w; n])
    }

    /// A single atom of the given weight.
    pub fn dirac(point: &[f64], weight: f64) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![weight])
    }

    /// The measure with no atoms.
    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new(), weights: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Iterates over `(point, weight)` pairs.
    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ |x|^p dμ`.
    pub fn moment(&self, p: f64) -> f64 {
        self.atoms().map(|(x, w)| w * norm(x).powf(p)).sum()
    }

    /// Image measure under `f`; weights are carried over unchanged.
    pub fn push_forward<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        if self.is_empty() {
            return Ok(self.clone());
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut out_dim = None;
        for (x, _) in self.atoms() {
            let y = f(x);
            match out_dim {
                None => out_dim = Some(y.len()),
                Some(d) if d != y.len() => {
                    return Err(Error::DimensionMismatch { expected: d, got: y.len() })
                }
                _ => {}
            }
            coords.extend(y);
        }
        Self::new(out_dim.unwrap_or(self.dim), coords, self.weights.clone())
    }

    /// Push-forward under the projection of R^{split} × R^{dim-split} onto one factor.
    pub fn marginal(&self, which: Marginal, split: usize) -> Result<Self> {
        if split == 0 || split >= self.dim {
            return Err(Error::BadSplit { split, dim: self.dim });
        }
        let range = match which {
            Marginal::First => 0..split,
            Marginal::Second => split..self.dim,
        };
        let d = range.len();
        let mut coords = Vec::with_capacity(self.len() * d);
        for (x, _) in self.atoms() {
            coords.extend_from_slice(&x[range.clone()]);
        }
        Self::new(d, coords, self.weights.clone())
    }

    /// `max_i |x_i|`.
    pub fn support_radius(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        Ok(self.atoms().map(|(x, _)| norm(x)).fold(0.0, f64::max))
    }

    /// Mass-weighted barycenter.
    pub fn mean(&self) -> Result<Vec<f64>> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.atoms() {
            for (mk, xk) in m.iter_mut().zip(x) {
                *mk += w * xk;
            }
        }
        m.iter_mut().for_each(|v| *v /= mass);
        Ok(m)
    }

    /// Same atoms with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dim,
            self.coords.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }

    /// Sum of two measures as a multiset union.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::new(self.dim, coords, weights)
    }

    /// Merges atoms at bit-identical points, keeping first-occurrence order.
    pub fn merge_coincident(&self) -> Self {
        let mut coords: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (x, w) in self.atoms() {
            let hit = coords
                .chunks_exact(self.dim)
                .position(|y| y.iter().zip(x).all(|(a, b)| a.to_bits() == b.to_bits()));
            match hit {
                Some(k) => weights[k] += w,
                None => {
                    coords.extend_from_slice(x);
                    weights.push(w);
                }
            }
        }
        Self { dim: self.dim, coords, weights }
    }
}

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance.
pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// JSON literal: `{"dim": d, "atoms": [{"x": [..], "w": ..}, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureLiteral {
    pub dim: usize,
    pub atoms: Vec<AtomLiteral>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomLiteral {
    pub x: Vec<f64>,
    pub w: f64,
}

impl TryFrom<MeasureLiteral> for DiscreteMeasure {
    type Error = Error;

    fn try_from(lit: MeasureLiteral) -> Result<Self> {
        let mut coords = Vec::with_capacity(lit.atoms.len() * lit.dim);
        let mut weights = Vec::with_capacity(lit.atoms.len());
        for a in lit.atoms {
            if a.x.len() != lit.dim {
                return Err(Error::DimensionMismatch { expected: lit.dim, got: a.x.len() });
            }
            coords.extend(a.x);
            weights.push(a.w);
        }
        DiscreteMeasure::new(lit.dim, coords, weights)
    }
}

impl From<DiscreteMeasure> for MeasureLiteral {
    fn from(m: DiscreteMeasure) -> Self {
        let atoms = m
            .atoms()
            .map(|(x, w)| AtomLiteral { x: x.to_vec(), w })
            .collect();
        MeasureLiteral { dim: m.dim, atoms }
    }
}

/// Time-sampled measures sharing atom identity: snapshot `k` is the state at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureCurve {
    times: Vec<f64>,
    snapshots: Vec<DiscreteMeasure>,
}

impl MeasureCurve {
    pub fn new(times: Vec<f64>, snapshots: Vec<DiscreteMeasure>) -> Result<Self> {
        if times.is_empty() || times.len() != snapshots.len() {
            return Err(Error::InvalidParameter(format!(
                "{} times for {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidParameter("curve must start at t = 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("curve times must increase strictly".into()));
        }
        let (dim, n) = (snapshots[0].dim(), snapshots[0].len());
        if let Some(s) = snapshots.iter().find(|s| s.dim() != dim || s.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: s.len() });
        }
        Ok(Self { times, snapshots })
    }

    /// The constant curve `μ` sampled at the given times.
    pub fn stationary(measure: DiscreteMeasure, times: Vec<f64>) -> Result<Self> {
        let snaps = vec![measure; times.len()];
        Self::new(times, snaps)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[DiscreteMeasure] {
        &self.snapshots
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("curve is nonempty")
    }

    pub fn first(&self) -> &DiscreteMeasure {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &DiscreteMeasure {
        self.snapshots.last().expect("curve is nonempty")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Trapezoid rule of a per-snapshot quantity over the time grid.
    pub fn integrate<F>(&self, mut f: F) -> f64
    where
        F: FnMut(f64, &DiscreteMeasure) -> f64,
    {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.snapshots)
            .map(|(&t, m)| f(t, m))
            .collect();
        trapezoid(&self.times, &vals)
    }
}

/// Trapezoid rule on a (possibly nonuniform) grid.
pub fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}
