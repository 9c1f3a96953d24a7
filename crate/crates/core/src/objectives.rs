//! Convex local cost oracles and sublevel-set geometry.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::seeding;
use crate::vecops::{add_scaled, dot, norm, scale};

/// Number of random directions probed by the generic sublevel radius.
pub const SUBLEVEL_RANDOM_DIRECTIONS: usize = 64;
/// Multiplier applied to the largest probed sublevel step.
pub const SUBLEVEL_SAFETY_FACTOR: f64 = 1.1;
/// Probed steps beyond this indicate an unbounded sublevel set.
pub const SUBLEVEL_MAX_STEP: f64 = 1e9;

const OPTIMIZE_MAX_ITERS: usize = 20_000;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("regularization must be positive, got {0}")]
    InvalidRegularization(f64),
    #[error("label {value} at row {row} is not 0 or 1")]
    InvalidLabel { row: usize, value: u8 },
    #[error("dataset is empty")]
    EmptyData,
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("sublevel set looks unbounded: step {step} exceeded {limit}")]
    UnboundedSublevel { step: f64, limit: f64 },
    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm}")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },
    #[error("cannot average an empty list of objectives")]
    EmptyAverage,
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

/// Convex cost `f: R^d -> R` with a deterministic subgradient selection.
pub trait Objective: Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// An element of the subdifferential at `x`.
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;

    /// Exact minimizer when known in closed form.
    fn minimizer_hint(&self) -> Option<Vec<f64>> {
        None
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Modulus `mu` with `f(y) >= f(x) + <g, y - x> + mu/2 |y - x|^2`, if known.
    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    /// Closed-form radius of a ball around the minimizer containing the `eps`-sublevel set.
    fn sublevel_radius_closed_form(&self, _eps: f64) -> Option<f64> {
        None
    }

    /// Bound in `[0, pi/2)` on the angle between `g(x)` and `x - x*` valid at every `x != x*`.
    fn gradient_angle_bound(&self) -> Option<f64> {
        None
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        None
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ObjectiveError::DimensionMismatch { expected, got })
    }
}

/// `f(x) = 1/2 x^T Q x + b^T x + c` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    q: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    lambda_min: f64,
    lambda_max: f64,
    minimizer: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(q: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        Self::with_constant(q, b, 0.0)
    }

    pub fn with_constant(q: DMatrix<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let d = q.nrows();
        check_dim(d, q.ncols())?;
        check_dim(d, b.len())?;
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(ObjectiveError::NotSymmetric);
        }
        let eig = SymmetricEigen::new(q.clone());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_min > 0.0) {
            return Err(ObjectiveError::NotPositiveDefinite(lambda_min));
        }
        let b = DVector::from_vec(b);
        let chol = q
            .clone()
            .cholesky()
            .ok_or(ObjectiveError::NotPositiveDefinite(lambda_min))?;
        let minimizer = chol.solve(&(-&b)).as_slice().to_vec();
        Ok(Self {
            q,
            b,
            c,
            lambda_min,
            lambda_max,
            minimizer,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: Vec<f64>) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            check_dim(d, r.len())?;
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]), b)
    }

    /// `Q = M^T M + 0.1 I` and `b` with standard normal entries.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let m = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let q = m.transpose() * &m + DMatrix::identity(d, d) * 0.1;
        let q = (&q + q.transpose()) * 0.5;
        let b: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        Self::new(q, b).expect("M^T M + 0.1 I is positive definite")
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &[f64] {
        self.b.as_slice()
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.q * &xv)) + self.b.dot(&xv) + self.c
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        (&self.q * xv + &self.b).as_slice().to_vec()
    }

    fn minimizer_hint(&self) -> Option<Vec<f64>> {
        Some(self.minimizer.clone())
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.q.clone())
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.lambda_min)
    }

    fn sublevel_radius_closed_form(&self, eps: f64) -> Option<f64> {
        Some((2.0 * eps / self.lambda_min).sqrt())
    }

    /// `cos angle(g(x), x - x*) >= 1/kappa` with `kappa = lambda_max / lambda_min`.
    fn gradient_angle_bound(&self) -> Option<f64> {
        Some((1.0 / self.condition_number()).clamp(0.0, 1.0).acos())
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }
}

/// `scale * sum_j log(1 + exp(-y_j <x~_j, w>)) + reg/2 |w|^2`, labels mapped `{0,1} -> {-1,+1}`
/// and `x~` the feature row with a trailing bias entry 1.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    rows: Vec<Vec<f64>>,
    signs: Vec<f64>,
    reg: f64,
    scale: f64,
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn new(features: &[Vec<f64>], labels: &[u8], reg: f64, scale: f64) -> Result<Self> {
        if !(reg > 0.0 && reg.is_finite()) {
            return Err(ObjectiveError::InvalidRegularization(reg));
        }
        if features.is_empty() {
            return Err(ObjectiveError::EmptyData);
        }
        check_dim(features.len(), labels.len())?;
        let width = features[0].len();
        let mut rows = Vec::with_capacity(features.len());
        let mut signs = Vec::with_capacity(features.len());
        for (row, (f, &label)) in features.iter().zip(labels).enumerate() {
            check_dim(width, f.len())?;
            let s = match label {
                0 => -1.0,
                1 => 1.0,
                value => return Err(ObjectiveError::InvalidLabel { row, value }),
            };
            let mut r = f.clone();
            r.push(1.0);
            rows.push(r);
            signs.push(s);
        }
        Ok(Self {
            rows,
            signs,
            reg,
            scale,
        })
    }

    pub fn regularization(&self) -> f64 {
        self.reg
    }

    pub fn sample_count(&self) -> usize {
        self.rows.len()
    }

    /// Fraction of rows whose predicted class `<x~, w> >= 0 -> 1` matches the label.
    pub fn accuracy(w: &[f64], features: &[Vec<f64>], labels: &[u8]) -> f64 {
        if features.is_empty() {
            return 0.0;
        }
        let bias = w[w.len() - 1];
        let hits = features
            .iter()
            .zip(labels)
            .filter(|(f, &y)| {
                let margin = dot(f, &w[..w.len() - 1]) + bias;
                (margin >= 0.0) == (y == 1)
            })
            .count();
        hits as f64 / features.len() as f64
    }

    /// Mean unscaled, unregularized logistic loss of `w` on the rows.
    pub fn mean_log_loss(w: &[f64], features: &[Vec<f64>], labels: &[u8]) -> f64 {
        if features.is_empty() {
            return 0.0;
        }
        let bias = w[w.len() - 1];
        let total: f64 = features
            .iter()
            .zip(labels)
            .map(|(f, &y)| {
                let s = if y == 1 { 1.0 } else { -1.0 };
                softplus(-s * (dot(f, &w[..w.len() - 1]) + bias))
            })
            .sum();
        total / features.len() as f64
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let loss: f64 = self
            .rows
            .iter()
            .zip(&self.signs)
            .map(|(r, s)| softplus(-s * dot(r, w)))
            .sum();
        self.scale * loss + 0.5 * self.reg * dot(w, w)
    }

    fn subgradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = scale(w, self.reg);
        for (r, s) in self.rows.iter().zip(&self.signs) {
            let coef = -self.scale * s * sigmoid(-s * dot(r, w));
            for (gi, ri) in g.iter_mut().zip(r) {
                *gi += coef * ri;
            }
        }
        g
    }

    fn hessian(&self, w: &[f64]) -> Option<DMatrix<f64>> {
        let d = self.dim();
        let mut h = DMatrix::identity(d, d) * self.reg;
        for r in &self.rows {
            let p = sigmoid(dot(r, w));
            let c = self.scale * p * (1.0 - p);
            let rv = DVector::from_column_slice(r);
            h += &rv * rv.transpose() * c;
        }
        Some(h)
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.reg)
    }
}

/// `(1/m) sum_i f_i`.
#[derive(Debug, Clone)]
pub struct AverageObjective {
    parts: Vec<Arc<dyn Objective>>,
}

impl AverageObjective {
    pub fn new(parts: Vec<Arc<dyn Objective>>) -> Result<Self> {
        let first = parts.first().ok_or(ObjectiveError::EmptyAverage)?;
        let d = first.dim();
        for p in &parts {
            check_dim(d, p.dim())?;
        }
        Ok(Self { parts })
    }

    fn weight(&self) -> f64 {
        1.0 / self.parts.len() as f64
    }
}

impl Objective for AverageObjective {
    fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.value(x)).sum::<f64>() * self.weight()
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for p in &self.parts {
            g = add_scaled(&g, 1.0, &p.subgradient(x));
        }
        scale(&g, self.weight())
    }

    /// Solves `(sum Q_i) x = -sum b_i` when every part is quadratic.
    fn minimizer_hint(&self) -> Option<Vec<f64>> {
        let quads: Option<Vec<&QuadraticObjective>> = self.parts.iter().map(|p| p.as_quadratic()).collect();
        let quads = quads?;
        let d = self.dim();
        let mut q = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for part in quads {
            q += part.q();
            b += DVector::from_column_slice(part.b());
        }
        Some(q.cholesky()?.solve(&(-b)).as_slice().to_vec())
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(self.dim(), self.dim());
        for p in &self.parts {
            acc += p.hessian(x)?;
        }
        Some(acc * self.weight())
    }

    fn strong_convexity(&self) -> Option<f64> {
        let mut mu = 0.0;
        for p in &self.parts {
            mu += p.strong_convexity()?;
        }
        Some(mu * self.weight())
    }
}

/// Approximate minimizer `x^` with `|x^ - x*| <= tol` when a strong-convexity
/// modulus is known (stops at `|g| <= tol * mu`), else stops at `|g| <= tol`.
///
/// Uses the closed form when available, damped Newton with backtracking when
/// the oracle exposes a Hessian, and backtracking gradient descent otherwise.
pub fn local_optimize(obj: &dyn Objective, tol: f64) -> Result<Vec<f64>> {
    if let Some(x) = obj.minimizer_hint() {
        return Ok(x);
    }
    let threshold = tol * obj.strong_convexity().unwrap_or(1.0);
    let d = obj.dim();
    let mut x = vec![0.0; d];
    let mut fx = obj.value(&x);
    let mut gd_step = 1.0;
    let mut last_norm = f64::INFINITY;
    for _ in 0..OPTIMIZE_MAX_ITERS {
        let g = obj.subgradient(&x);
        let gnorm = norm(&g);
        last_norm = gnorm;
        if gnorm <= threshold {
            return Ok(x);
        }
        let newton_dir = obj.hessian(&x).and_then(|h| {
            let sol = h.cholesky()?.solve(&DVector::from_column_slice(&g));
            Some(scale(sol.as_slice(), -1.0))
        });
        let (dir, mut t) = match newton_dir {
            Some(dir) if dot(&dir, &g) < 0.0 => (dir, 1.0),
            _ => (scale(&g, -1.0), gd_step),
        };
        let slope = dot(&dir, &g);
        let mut accepted = false;
        for _ in 0..80 {
            let cand = add_scaled(&x, t, &dir);
            let fc = obj.value(&cand);
            // The gradient test takes over once value differences drop below rounding.
            let armijo = fc <= fx + 1e-4 * t * slope;
            let within_rounding = fc <= fx + 8.0 * f64::EPSILON * fx.abs().max(1.0);
            if armijo || (within_rounding && norm(&obj.subgradient(&cand)) < gnorm) {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        gd_step = (t * 2.0).min(1e12);
    }
    Err(ObjectiveError::NonConvergence {
        iterations: OPTIMIZE_MAX_ITERS,
        grad_norm: last_norm,
        last: x,
    })
}

/// Radius `delta` with `{f <= f(x*) + eps} ⊆ B(x*, delta)`.
///
/// Uses the oracle's closed form when present; otherwise bisects the sublevel
/// boundary along the `2d` axis directions and
/// [`SUBLEVEL_RANDOM_DIRECTIONS`] seeded random directions and returns the
/// largest step times [`SUBLEVEL_SAFETY_FACTOR`].
pub fn sublevel_radius(obj: &dyn Objective, x_star: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ObjectiveError::InvalidEpsilon(eps));
    }
    check_dim(obj.dim(), x_star.len())?;
    if let Some(r) = obj.sublevel_radius_closed_form(eps) {
        return Ok(r);
    }
    let d = obj.dim();
    let level = obj.value(x_star) + eps;
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2 * d + SUBLEVEL_RANDOM_DIRECTIONS);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = seeding::stream(d as u64, &[seeding::DIRECTIONS]);
    while dirs.len() < 2 * d + SUBLEVEL_RANDOM_DIRECTIONS {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            dirs.push(scale(&v, 1.0 / n));
        }
    }
    let inside = |u: &[f64], t: f64| obj.value(&add_scaled(x_star, t, u)) <= level;
    let mut best = 0.0f64;
    for u in &dirs {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while inside(u, hi) {
            lo = hi;
            hi *= 2.0;
            if hi > SUBLEVEL_MAX_STEP {
                return Err(ObjectiveError::UnboundedSublevel {
                    step: hi,
                    limit: SUBLEVEL_MAX_STEP,
                });
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if inside(u, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.max(hi);
    }
    Ok(best * SUBLEVEL_SAFETY_FACTOR)
}

/// `g` rescaled to norm `bound` when longer.
pub fn clip_gradient(g: &[f64], bound: f64) -> Vec<f64> {
    assert!(bound > 0.0, "gradient bound must be positive");
    let n = norm(g);
    if n <= bound {
        g.to_vec()
    } else {
        scale(g, bound / n)
    }
}
