//! Composite problems `φ = f + g` and the power-norm calculus every solver shares.
//!
//! `f` is smooth and finite everywhere; `g` is proper and lower semicontinuous,
//! and may take the value `+∞`. Oracle outputs pass through [`CompositeProblem`]
//! which turns a NaN into a hard error instead of letting it leak into a solver.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::sync::Arc;

use ndarray::Array1;

use crate::error::{check_dim, Error, Result};

/// Dense double-precision point in ℝⁿ.
pub type Point = Array1<f64>;

/// Euclidean norm.
pub fn norm(x: &Point) -> f64 {
    x.dot(x).sqrt()
}

/// A real number or `±∞`, never NaN.
///
/// Addition follows the convention `+∞ + (−∞) = +∞`, hence `∞ − ∞ = +∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() {
            Err(Error::NotANumber("extended real"))
        } else {
            Ok(ExtReal(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_pos_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl From<ExtReal> for f64 {
    fn from(v: ExtReal) -> f64 {
        v.0
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_pos_infinite() || rhs.is_pos_infinite() {
            ExtReal::INFINITY
        } else {
            ExtReal(self.0 + rhs.0)
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal(rhs)
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        ExtReal(-self.0)
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;
    fn sub(self, rhs: ExtReal) -> ExtReal {
        if self.is_pos_infinite() {
            return ExtReal::INFINITY;
        }
        self + (-rhs)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Smooth part `f: ℝⁿ → ℝ`.
///
/// Implementations must be callable concurrently from several threads.
pub trait SmoothOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
    fn lower_bound(&self) -> Option<f64> {
        None
    }
}

/// Nonsmooth part `g: ℝⁿ → ℝ ∪ {+∞}`.
///
/// `subgradient` returns one element of the limiting subdifferential; which one
/// is chosen is documented by each implementation.
pub trait NonsmoothOracle: Send + Sync {
    fn value(&self, x: &Point) -> f64;
    fn subgradient(&self, x: &Point) -> Point;
    fn lower_bound(&self) -> Option<f64> {
        None
    }
}

/// Smooth oracle built from a pair of closures.
pub struct SmoothFn<V, G> {
    dim: usize,
    value: V,
    gradient: G,
    lower_bound: Option<f64>,
}

impl<V, G> SmoothFn<V, G>
where
    V: Fn(&Point) -> f64 + Send + Sync,
    G: Fn(&Point) -> Point + Send + Sync,
{
    pub fn new(dim: usize, value: V, gradient: G) -> Self {
        SmoothFn {
            dim,
            value,
            gradient,
            lower_bound: None,
        }
    }

    pub fn with_lower_bound(mut self, lb: f64) -> Self {
        self.lower_bound = Some(lb);
        self
    }
}

impl<V, G> SmoothOracle for SmoothFn<V, G>
where
    V: Fn(&Point) -> f64 + Send + Sync,
    G: Fn(&Point) -> Point + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Point) -> Point {
        (self.gradient)(x)
    }
    fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }
}

/// Nonsmooth oracle built from a pair of closures.
pub struct NonsmoothFn<V, S> {
    value: V,
    subgradient: S,
    lower_bound: Option<f64>,
}

impl<V, S> NonsmoothFn<V, S>
where
    V: Fn(&Point) -> f64 + Send + Sync,
    S: Fn(&Point) -> Point + Send + Sync,
{
    pub fn new(value: V, subgradient: S) -> Self {
        NonsmoothFn {
            value,
            subgradient,
            lower_bound: None,
        }
    }

    pub fn with_lower_bound(mut self, lb: f64) -> Self {
        self.lower_bound = Some(lb);
        self
    }
}

impl<V, S> NonsmoothOracle for NonsmoothFn<V, S>
where
    V: Fn(&Point) -> f64 + Send + Sync,
    S: Fn(&Point) -> Point + Send + Sync,
{
    fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }
    fn subgradient(&self, x: &Point) -> Point {
        (self.subgradient)(x)
    }
    fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }
}

/// `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFunction;

impl NonsmoothOracle for ZeroFunction {
    fn value(&self, _x: &Point) -> f64 {
        0.0
    }
    fn subgradient(&self, x: &Point) -> Point {
        Point::zeros(x.len())
    }
    fn lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `‖x‖^{p−2}·x`, the gradient of `‖x‖^p / p`, with the convention `0/0 = 0`.
pub fn power_grad(p: f64, x: &Point) -> Result<Point> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "power p must exceed 1, got {p}"
        )));
    }
    Ok(power_grad_unchecked(p, x))
}

pub(crate) fn power_grad_unchecked(p: f64, x: &Point) -> Point {
    let n = norm(x);
    if n == 0.0 {
        return Point::zeros(x.len());
    }
    x * n.powf(p - 2.0)
}

/// The pair `(f, g)` with majorant power `p` and an optional `L_p` estimate.
#[derive(Clone)]
pub struct CompositeProblem {
    f: Arc<dyn SmoothOracle>,
    g: Arc<dyn NonsmoothOracle>,
    p: f64,
    lp_estimate: Option<f64>,
    lower_bound: Option<f64>,
}

impl fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("dim", &self.dim())
            .field("p", &self.p)
            .field("lp_estimate", &self.lp_estimate)
            .field("lower_bound", &self.lower_bound())
            .finish()
    }
}

impl CompositeProblem {
    pub fn new(f: Arc<dyn SmoothOracle>, g: Arc<dyn NonsmoothOracle>, p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power p must exceed 1, got {p}"
            )));
        }
        Ok(CompositeProblem {
            f,
            g,
            p,
            lp_estimate: None,
            lower_bound: None,
        })
    }

    pub fn with_lp_estimate(mut self, lp: f64) -> Result<Self> {
        if !(lp > 0.0) || !lp.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "L_p estimate must be positive, got {lp}"
            )));
        }
        self.lp_estimate = Some(lp);
        Ok(self)
    }

    /// Overrides the lower bound on `φ` derived from the oracles.
    pub fn with_lower_bound(mut self, lb: f64) -> Self {
        self.lower_bound = Some(lb);
        self
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lp_estimate(&self) -> Option<f64> {
        self.lp_estimate
    }

    pub fn smooth(&self) -> &Arc<dyn SmoothOracle> {
        &self.f
    }

    pub fn nonsmooth(&self) -> &Arc<dyn NonsmoothOracle> {
        &self.g
    }

    /// Lower bound on `φ`: the explicit override, or `inf f + inf g` when both are known.
    pub fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
            .or_else(|| Some(self.f.lower_bound()? + self.g.lower_bound()?))
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        check_dim(self.dim(), x.len())
    }

    pub fn smooth_value(&self, x: &Point) -> Result<f64> {
        self.check_point(x)?;
        let v = self.f.value(x);
        if v.is_nan() {
            return Err(Error::NotANumber("smooth value"));
        }
        Ok(v)
    }

    pub fn smooth_gradient(&self, x: &Point) -> Result<Point> {
        self.check_point(x)?;
        let g = self.f.gradient(x);
        check_dim(self.dim(), g.len())?;
        if g.iter().any(|v| v.is_nan()) {
            return Err(Error::NotANumber("smooth gradient"));
        }
        Ok(g)
    }

    pub fn nonsmooth_value(&self, x: &Point) -> Result<ExtReal> {
        self.check_point(x)?;
        let v = self.g.value(x);
        if v.is_nan() {
            return Err(Error::NotANumber("nonsmooth value"));
        }
        ExtReal::new(v)
    }

    pub fn nonsmooth_subgradient(&self, x: &Point) -> Result<Point> {
        self.check_point(x)?;
        let s = self.g.subgradient(x);
        check_dim(self.dim(), s.len())?;
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::NotANumber("nonsmooth subgradient"));
        }
        Ok(s)
    }

    /// `φ(x) = f(x) + g(x)`.
    pub fn objective(&self, x: &Point) -> Result<ExtReal> {
        Ok(self.nonsmooth_value(x)? + self.smooth_value(x)?)
    }

    /// Freezes `f(x)` and `∇f(x)` so the model can be minimized over `y` cheaply.
    pub fn linearize(&self, x: &Point) -> Result<Linearization<'_>> {
        let fx = self.smooth_value(x)?;
        let grad = self.smooth_gradient(x)?;
        Ok(Linearization {
            problem: self,
            x: x.clone(),
            fx,
            grad,
        })
    }

    /// `ℓ(x, y) = f(x) + ⟨∇f(x), y − x⟩ + g(y)`.
    pub fn eval_ell(&self, x: &Point, y: &Point) -> Result<ExtReal> {
        self.check_point(y)?;
        self.linearize(x)?.ell(y)
    }

    /// `ℓ(x, y) + ‖x − y‖^p / (pγ)`, the quantity whose infimum over `y` is the envelope.
    pub fn model_value(&self, x: &Point, y: &Point, gamma: f64) -> Result<ExtReal> {
        self.check_point(y)?;
        self.linearize(x)?.model(y, gamma)
    }
}

/// `f` and `∇f` frozen at a base point `x`.
pub struct Linearization<'a> {
    problem: &'a CompositeProblem,
    x: Point,
    fx: f64,
    grad: Point,
}

impl<'a> Linearization<'a> {
    pub fn problem(&self) -> &'a CompositeProblem {
        self.problem
    }

    pub fn base(&self) -> &Point {
        &self.x
    }

    pub fn gradient(&self) -> &Point {
        &self.grad
    }

    pub fn smooth_value(&self) -> f64 {
        self.fx
    }

    pub fn ell(&self, y: &Point) -> Result<ExtReal> {
        let lin = self.fx + self.grad.dot(&(y - &self.x));
        if lin.is_nan() {
            return Err(Error::NotANumber("linearization"));
        }
        Ok(self.problem.nonsmooth_value(y)? + lin)
    }

    pub fn model(&self, y: &Point, gamma: f64) -> Result<ExtReal> {
        check_gamma(gamma)?;
        let dist = norm(&(&self.x - y));
        let reg = dist.powf(self.problem.p) / (self.problem.p * gamma);
        Ok(self.ell(y)? + reg)
    }

    /// One element of `∇f(x) + ∂g(y) + (1/γ)‖y − x‖^{p−2}(y − x)`.
    pub fn model_subgradient(&self, y: &Point, gamma: f64) -> Result<Point> {
        let sub = self.problem.nonsmooth_subgradient(y)?;
        let prox = power_grad_unchecked(self.problem.p, &(y - &self.x));
        Ok(&self.grad + &sub + &(prox / gamma))
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )))
    }
}

/// Free-function form of [`CompositeProblem::eval_ell`].
pub fn eval_ell(problem: &CompositeProblem, x: &Point, y: &Point) -> Result<ExtReal> {
    problem.eval_ell(x, y)
}

/// Free-function form of [`CompositeProblem::model_value`].
pub fn model_value(
    problem: &CompositeProblem,
    x: &Point,
    y: &Point,
    gamma: f64,
) -> Result<ExtReal> {
    problem.model_value(x, y, gamma)
}
