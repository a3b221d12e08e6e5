use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::InvalidParameter("box bounds must share a nonzero dimension".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::InvalidParameter("box needs finite lo < hi per coordinate".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    fn contains_open(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v > *l && *v < *h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// `sup{|x| : x in the box}`.
    pub fn radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn intersects(&self, other: &Self) -> bool {
        (0..self.dim()).all(|k| self.lo[k] <= other.hi[k] && other.lo[k] <= self.hi[k])
    }
}

/// Feasible region: an outer box minus a set of box obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
}

impl Domain {
    pub fn new(bounds: Aabb, obstacles: Vec<Aabb>) -> Result<Self> {
        let d = Self { bounds, obstacles };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_box(dim: usize) -> Self {
        Self { bounds: Aabb { lo: vec![0.0; dim], hi: vec![1.0; dim] }, obstacles: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.check()?;
        let d = self.bounds.dim();
        for (k, o) in self.obstacles.iter().enumerate() {
            o.check()?;
            if o.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: o.dim() });
            }
            let inside = (0..d).all(|i| o.lo[i] > self.bounds.lo[i] && o.hi[i] < self.bounds.hi[i]);
            if !inside {
                return Err(Error::InvalidParameter(format!("obstacle {k} touches the outer box")));
            }
            if self.obstacles[..k].iter().any(|p| p.intersects(o)) {
                return Err(Error::InvalidParameter(format!("obstacle {k} overlaps another obstacle")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn radius(&self) -> f64 {
        self.bounds.radius()
    }

    /// Inside the outer box and not in the interior of any obstacle.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds.contains(x) && !self.obstacles.iter().any(|o| o.contains_open(x))
    }

    /// Removes the velocity component pointing out of the feasible region at
    /// points within `tol` of a wall or obstacle face. Faces are treated
    /// independently, so a corner zeroes both components.
    pub fn apply_boundary(&self, x: &[f64], v: &mut [f64], tol: f64) {
        let b = &self.bounds;
        for k in 0..x.len() {
            if x[k] >= b.hi[k] - tol && v[k] > 0.0 {
                v[k] = 0.0;
            }
            if x[k] <= b.lo[k] + tol && v[k] < 0.0 {
                v[k] = 0.0;
            }
        }
        for o in &self.obstacles {
            let near = |j: usize| x[j] >= o.lo[j] - tol && x[j] <= o.hi[j] + tol;
            if !(0..x.len()).all(near) {
                continue;
            }
            let mut faces: Vec<(usize, bool)> = Vec::new();
            for k in 0..x.len() {
                if (x[k] - o.lo[k]).abs() <= tol {
                    faces.push((k, false));
                }
                if (x[k] - o.hi[k]).abs() <= tol {
                    faces.push((k, true));
                }
            }
            if faces.is_empty() && o.contains_open(x) {
                faces.push(nearest_face(o, x));
            }
            for (k, upper) in faces {
                if (upper && v[k] < 0.0) || (!upper && v[k] > 0.0) {
                    v[k] = 0.0;
                }
            }
        }
    }

    /// Moves an escaped point back to the nearest feasible point on the
    /// violated face. Returns true when the point was moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for k in 0..x.len() {
            let c = x[k].clamp(self.bounds.lo[k], self.bounds.hi[k]);
            if c != x[k] {
                x[k] = c;
                moved = true;
            }
        }
        for o in &self.obstacles {
            if o.contains_open(x) {
                let (k, upper) = nearest_face(o, x);
                x[k] = if upper { o.hi[k] } else { o.lo[k] };
                moved = true;
            }
        }
        moved
    }
}

/// `(coordinate, is_upper)` of the obstacle face closest to `x`.
fn nearest_face(o: &Aabb, x: &[f64]) -> (usize, bool) {
    let mut best = (f64::INFINITY, 0, false);
    for k in 0..x.len() {
        for (face, upper) in [(o.lo[k], false), (o.hi[k], true)] {
            let d = (x[k] - face).abs();
            if d < best.0 {
                best = (d, k, upper);
            }
        }
    }
    (best.1, best.2)
}
