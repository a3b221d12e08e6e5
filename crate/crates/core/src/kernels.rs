//! Admissible vector fields `g : [0,T] × R^d → R^d` with a declared bound `ℓ(t)`:
//!
//! * `|g(t,x) − g(t,y)| ≤ ℓ(t)|x − y|`
//! * `|g(t,x)| ≤ ℓ(t)(1 + |x|)`
//!
//! Built-in kernels carry an analytically derived `ℓ`; see [`KernelSpec`] for
//! the derivations. User fields declare their own `ℓ` and can be spot-checked
//! with [`validate_admissibility`].

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{dist, norm, DiscreteMeasure};
use crate::wasserstein::wasserstein_p;

/// Slack allowed on admissibility ratios.
pub const ADMISSIBILITY_SLACK: f64 = 1e-9;

/// Nonnegative piecewise-constant function of time. Value `values[k]` holds on
/// `[breaks[k], breaks[k+1])`; the last piece extends to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundRepr", into = "BoundRepr")]
pub struct BoundFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundRepr {
    Constant(f64),
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl TryFrom<BoundRepr> for BoundFunction {
    type Error = Error;
    fn try_from(r: BoundRepr) -> Result<Self> {
        match r {
            BoundRepr::Constant(v) => Self::constant(v),
            BoundRepr::Piecewise { breaks, values } => Self::piecewise(breaks, values),
        }
    }
}

impl From<BoundFunction> for BoundRepr {
    fn from(b: BoundFunction) -> Self {
        if b.values.len() == 1 {
            BoundRepr::Constant(b.values[0])
        } else {
            BoundRepr::Piecewise { breaks: b.breaks, values: b.values }
        }
    }
}

impl BoundFunction {
    pub fn constant(value: f64) -> Result<Self> {
        Self::piecewise(vec![0.0], vec![value])
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::InvalidParameter("bound needs one value per breakpoint".into()));
        }
        if breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("bound values must be finite and ≥ 0".into()));
        }
        Ok(Self { breaks, values })
    }

    pub fn zero() -> Self {
        Self { breaks: vec![0.0], values: vec![0.0] }
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b <= t).saturating_sub(1);
        self.values[k]
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `sup` over `[0, horizon]`.
    pub fn sup(&self, horizon: f64) -> f64 {
        self.breaks
            .iter()
            .zip(&self.values)
            .filter(|(b, _)| **b <= horizon)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }

    /// `∫_0^horizon ℓ(s) ds`.
    pub fn integral(&self, horizon: f64) -> f64 {
        let mut total = 0.0;
        for (k, (&b, &v)) in self.breaks.iter().zip(&self.values).enumerate() {
            if b >= horizon {
                break;
            }
            let end = self.breaks.get(k + 1).copied().unwrap_or(horizon).min(horizon);
            total += v * (end - b);
        }
        total
    }

    /// Pointwise sum on the merged breakpoint set.
    pub fn add(&self, other: &Self) -> Self {
        self.merge(other, |a, b| a + b)
    }

    /// Pointwise maximum.
    pub fn max(&self, other: &Self) -> Self {
        self.merge(other, f64::max)
    }

    fn merge(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks.iter().map(|&t| op(self.at(t), other.at(t))).collect();
        Self { breaks, values }
    }

    /// Pointwise product with a nonnegative scalar.
    pub fn scale(&self, factor: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Pointwise product of two piecewise-constant functions.
    pub fn mul(&self, other: &Self) -> Self {
        self.merge(other, |a, b| a * b)
    }
}

/// Built-in kernel families, in the JSON form `{"name": ..., "params": {...}}`.
///
/// Declared bounds (all time-independent before modulation):
///
/// * `zero`: `ℓ = 0`.
/// * `linear_attraction(a)`: `K(x) = −a x`. Lipschitz constant `a`, and
///   `|K(x)| = a|x| ≤ a(1 + |x|)`, so `ℓ = a`.
/// * `power_repulsion(c, r0, p)`: `K(x) = c x / max(|x|, r0)^{p+1}`. Inside the
///   ball the map is linear with constant `c/r0^{p+1}`. Outside, the Jacobian
///   has eigenvalues `c/|x|^{p+1}` (tangential) and `−p c/|x|^{p+1}` (radial).
///   The map is continuous across `|x| = r0`, so the global Lipschitz constant
///   is `c·max(1,p)/r0^{p+1}`. `|K| ≤ c/r0^p` everywhere. Hence
///   `ℓ = max(c·max(1,p)/r0^{p+1}, c/r0^p)`.
/// * `morse(ca, la, cr, lr)`: `K(x) = x·φ(|x|)` with
///   `φ(r) = (cr/lr²)e^{−r/lr} − (ca/la²)e^{−r/la}` (short-range repulsion,
///   longer-range attraction). The Jacobian `φ I + rφ' x̂x̂ᵀ` has eigenvalues
///   `φ` and `(rφ)'`; per exponential term both are bounded by `C/l²` because
///   `|1 − s|e^{−s} ≤ 1` for `s ≥ 0`. Also `r·e^{−r/l}/l² ≤ 1/(e l)`. Hence
///   `ℓ = max(cr/lr² + ca/la², (cr/lr + ca/la)/e)`.
/// * `constant_drift(c)`: `K(x) = c`. Lipschitz constant 0, `|c| ≤ |c|(1+|x|)`,
///   so `ℓ = |c|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum KernelSpec {
    Zero,
    LinearAttraction {
        a: f64,
    },
    PowerRepulsion {
        c: f64,
        r0: f64,
        #[serde(default = "default_power")]
        p: f64,
    },
    Morse {
        ca: f64,
        la: f64,
        cr: f64,
        lr: f64,
    },
    ConstantDrift {
        c: Vec<f64>,
    },
}

fn default_power() -> f64 {
    1.0
}

fn repulsion_denominator(r: f64, p: f64) -> f64 {
    let q = p + 1.0;
    if q == q.trunc() && q <= 8.0 {
        r.powi(q as i32)
    } else {
        r.powf(q)
    }
}

/// A kernel descriptor as found in scenario files. `ell` overrides the
/// analytic bound (used to declare deliberately wrong bounds for validation);
/// `modulation` multiplies the kernel by a piecewise-constant `m(t) ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDescriptor {
    #[serde(flatten)]
    pub spec: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<BoundFunction>,
}

impl From<KernelSpec> for KernelDescriptor {
    fn from(spec: KernelSpec) -> Self {
        Self { spec, ell: None, modulation: None }
    }
}

type CustomFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Shape {
    Zero,
    Linear { a: f64 },
    Repulsion { c: f64, r0: f64, p: f64 },
    Morse { ca: f64, la: f64, cr: f64, lr: f64 },
    Drift { c: Vec<f64> },
    Sum(Box<AdmissibleField>, Box<AdmissibleField>),
    Custom(Arc<CustomFn>),
}

/// A time-dependent vector field bundled with its declared bound `ℓ(t)`.
/// Cheap to clone; evaluation is pure and thread-safe.
#[derive(Clone)]
pub struct AdmissibleField {
    shape: Arc<Shape>,
    modulation: Option<BoundFunction>,
    ell: BoundFunction,
    dim: usize,
    name: String,
}

impl fmt::Debug for AdmissibleField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdmissibleField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("ell", &self.ell)
            .finish()
    }
}

impl AdmissibleField {
    /// Builds a built-in kernel with its analytic bound.
    pub fn builtin(spec: &KernelSpec, dim: usize) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if dim == 0 {
            return bad("dimension must be at least 1");
        }
        let (shape, ell, name) = match spec {
            KernelSpec::Zero => (Shape::Zero, 0.0, "zero"),
            KernelSpec::LinearAttraction { a } => {
                if !nonneg(*a) {
                    return bad("linear_attraction needs a ≥ 0");
                }
                (Shape::Linear { a: *a }, *a, "linear_attraction")
            }
            KernelSpec::PowerRepulsion { c, r0, p } => {
                if !nonneg(*c) || !(r0.is_finite() && *r0 > 0.0) || !nonneg(*p) {
                    return bad("power_repulsion needs c ≥ 0, r0 > 0, p ≥ 0");
                }
                let lip = c * p.max(1.0) / r0.powf(p + 1.0);
                let growth = c / r0.powf(*p);
                (Shape::Repulsion { c: *c, r0: *r0, p: *p }, lip.max(growth), "power_repulsion")
            }
            KernelSpec::Morse { ca, la, cr, lr } => {
                if !nonneg(*ca) || !nonneg(*cr) || !(*la > 0.0 && *lr > 0.0) {
                    return bad("morse needs ca, cr ≥ 0 and la, lr > 0");
                }
                let lip = cr / (lr * lr) + ca / (la * la);
                let growth = (cr / lr + ca / la) / std::f64::consts::E;
                (
                    Shape::Morse { ca: *ca, la: *la, cr: *cr, lr: *lr },
                    lip.max(growth),
                    "morse",
                )
            }
            KernelSpec::ConstantDrift { c } => {
                if c.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return bad("constant_drift needs finite components");
                }
                (Shape::Drift { c: c.clone() }, norm(c), "constant_drift")
            }
        };
        Ok(Self {
            shape: Arc::new(shape),
            modulation: None,
            ell: BoundFunction::constant(ell)?,
            dim,
            name: name.to_string(),
        })
    }

    /// Builds a field from a scenario descriptor.
    pub fn from_descriptor(desc: &KernelDescriptor, dim: usize) -> Result<Self> {
        let mut field = Self::builtin(&desc.spec, dim)?;
        if let Some(m) = &desc.modulation {
            field = field.modulated(m.clone());
        }
        if let Some(ell) = desc.ell {
            field.ell = BoundFunction::constant(ell)?;
        }
        Ok(field)
    }

    pub fn zero(dim: usize) -> Self {
        Self::builtin(&KernelSpec::Zero, dim).expect("zero kernel is always valid")
    }

    /// A user field with a declared bound. The closure writes `g(t, x)` into its
    /// output slice.
    pub fn custom<F>(dim: usize, name: &str, ell: BoundFunction, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            shape: Arc::new(Shape::Custom(Arc::new(f))),
            modulation: None,
            ell,
            dim,
            name: name.to_string(),
        }
    }

    /// `m(t)·g(t,x)`, with bound `m(t)·ℓ(t)`.
    pub fn modulated(mut self, m: BoundFunction) -> Self {
        self.ell = self.ell.mul(&m);
        self.modulation = Some(match self.modulation.take() {
            Some(prev) => prev.mul(&m),
            None => m,
        });
        self
    }

    /// Replaces the declared bound.
    pub fn with_ell(mut self, ell: BoundFunction) -> Self {
        self.ell = ell;
        self
    }

    pub fn ell(&self) -> &BoundFunction {
        &self.ell
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// True for the built-in zero kernel (and sums of zeros), which lets the
    /// integrators skip work without changing results.
    pub fn is_zero(&self) -> bool {
        match &*self.shape {
            Shape::Zero => true,
            Shape::Sum(a, b) => a.is_zero() && b.is_zero(),
            _ => false,
        }
    }

    /// Adds `scale · g(t, x)` to `out`.
    pub fn add_scaled(&self, t: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        let s = match &self.modulation {
            Some(m) => scale * m.at(t),
            None => scale,
        };
        match &*self.shape {
            Shape::Zero => {}
            Shape::Linear { a } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o -= s * a * xi;
                }
            }
            Shape::Repulsion { c, r0, p } => {
                let r = norm(x).max(*r0);
                let f = s * c / repulsion_denominator(r, *p);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += f * xi;
                }
            }
            Shape::Morse { ca, la, cr, lr } => {
                let r = norm(x);
                let phi = cr / (lr * lr) * (-r / lr).exp() - ca / (la * la) * (-r / la).exp();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += s * phi * xi;
                }
            }
            Shape::Drift { c } => {
                for (o, ci) in out.iter_mut().zip(c) {
                    *o += s * ci;
                }
            }
            Shape::Sum(a, b) => {
                a.add_scaled(t, x, s, out);
                b.add_scaled(t, x, s, out);
            }
            Shape::Custom(f) => {
                let mut buf = vec![0.0; out.len()];
                f(t, x, &mut buf);
                for (o, v) in out.iter_mut().zip(&buf) {
                    *o += s * v;
                }
            }
        }
    }

    /// Adds `Σ_j w_j g(t, x − y_j)` to `out`, with the points `y_j` stored
    /// flat in `ys`. Same arithmetic as repeated [`Self::add_scaled`] calls.
    pub fn add_convolution(&self, t: f64, x: &[f64], ys: &[f64], ws: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let m = self.modulation.as_ref().map(|m| m.at(t));
        let scale = |w: f64| m.map_or(w, |m| w * m);
        let mut diff = [0.0; 8];
        let mut heap;
        let diff: &mut [f64] = if d <= 8 {
            &mut diff[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for (j, &w) in ws.iter().enumerate() {
            let y = &ys[j * d..(j + 1) * d];
            for c in 0..d {
                diff[c] = x[c] - y[c];
            }
            match &*self.shape {
                Shape::Zero => return,
                Shape::Linear { a } => {
                    let s = scale(w);
                    for (o, xi) in out.iter_mut().zip(diff.iter()) {
                        *o -= s * a * xi;
                    }
                }
                Shape::Repulsion { c, r0, p } => {
                    let r = norm(diff).max(*r0);
                    let denom = if *p == 1.0 { r * r } else { repulsion_denominator(r, *p) };
                    let f = scale(w) * c / denom;
                    for (o, xi) in out.iter_mut().zip(diff.iter()) {
                        *o += f * xi;
                    }
                }
                _ => self.add_scaled(t, diff, w, out),
            }
        }
    }

    /// `g(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_scaled(t, x, 1.0, &mut out);
        out
    }

    /// Pointwise sum; the bound functions add.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(Self {
            ell: self.ell.add(&other.ell),
            shape: Arc::new(Shape::Sum(Box::new(self.clone()), Box::new(other.clone()))),
            modulation: None,
            dim: self.dim,
            name: format!("{}+{}", self.name, other.name),
        })
    }
}

/// `(K * μ)(t, x) = Σ_i w_i K(t, x − y_i)`.
pub fn convolve(kernel: &AdmissibleField, mu: &DiscreteMeasure, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !mu.is_empty() && mu.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: x.len() });
    }
    let mut out = vec![0.0; x.len()];
    let mut diff = vec![0.0; x.len()];
    for (y, w) in mu.atoms() {
        for k in 0..x.len() {
            diff[k] = x[k] - y[k];
        }
        kernel.add_scaled(t, &diff, w, &mut out);
    }
    Ok(out)
}

/// A sampled point where a condition was worst.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub ratio: f64,
}

/// Outcome of a Monte-Carlo admissibility check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub worst_lipschitz_ratio: f64,
    pub worst_growth_ratio: f64,
    pub lipschitz_witness: Option<Witness>,
    pub growth_witness: Option<Witness>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&v).max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    v.iter_mut().for_each(|c| *c *= r / n);
    v
}

/// Samples `(t, x, y)` in `[0,T] × B(0, radius)²` and reports the worst ratios
/// `|g(x)−g(y)| / (ℓ(t)|x−y|)` and `|g(x)| / (ℓ(t)(1+|x|))`. Half of the pairs
/// are drawn close together (log-uniform separation) to probe local slopes.
/// Failure is reported, not raised.
pub fn validate_admissibility(
    field: &AdmissibleField,
    horizon: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> AdmissibilityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = field.dim();
    let mut report = AdmissibilityReport {
        ok: true,
        worst_lipschitz_ratio: 0.0,
        worst_growth_ratio: 0.0,
        lipschitz_witness: None,
        growth_witness: None,
    };
    for s in 0..samples.max(1) {
        let t = horizon * rng.random::<f64>();
        let ell = field.ell().at(t);
        let x = sample_ball(&mut rng, dim, radius);
        let y = if s % 2 == 0 {
            sample_ball(&mut rng, dim, radius)
        } else {
            let h = radius * 10f64.powf(-6.0 * rng.random::<f64>());
            let dir = sample_ball(&mut rng, dim, 1.0);
            let n = norm(&dir).max(1e-300);
            x.iter().zip(&dir).map(|(a, d)| a + h * d / n).collect()
        };
        let gx = field.eval(t, &x);
        let gy = field.eval(t, &y);
        let lip = ratio(dist(&gx, &gy), ell * dist(&x, &y));
        if lip > report.worst_lipschitz_ratio || report.lipschitz_witness.is_none() {
            report.worst_lipschitz_ratio = report.worst_lipschitz_ratio.max(lip);
            report.lipschitz_witness = Some(Witness { t, x: x.clone(), y: Some(y.clone()), ratio: lip });
        }
        for (p, gp) in [(&x, &gx), (&y, &gy)] {
            let growth = ratio(norm(gp), ell * (1.0 + norm(p)));
            if growth > report.worst_growth_ratio || report.growth_witness.is_none() {
                report.worst_growth_ratio = report.worst_growth_ratio.max(growth);
                report.growth_witness = Some(Witness { t, x: p.clone(), y: None, ratio: growth });
            }
        }
    }
    report.ok = report.worst_lipschitz_ratio <= 1.0 + ADMISSIBILITY_SLACK
        && report.worst_growth_ratio <= 1.0 + ADMISSIBILITY_SLACK;
    report
}

/// Sup-norm gap between `K*μ1` and `K*μ2` over the probe points, together with
/// the bound `ℓ(t)·W1(μ1, μ2)` (unnormalized transport cost, i.e. scaled by
/// the common mass).
pub fn lipschitz_convolution_gap(
    kernel: &AdmissibleField,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    t: f64,
    probes: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let transport = wasserstein_p(mu1, mu2, 1.0)?;
    let bound = kernel.ell().at(t) * transport.cost;
    let mut gap = 0.0f64;
    for x in probes {
        let a = convolve(kernel, mu1, t, x)?;
        let b = convolve(kernel, mu2, t, x)?;
        gap = gap.max(dist(&a, &b));
    }
    Ok((gap, bound))
}
