//! Sampling-based validation of high-order majorants and the adaptive `L_p` estimate.
//!
//! A function `f` has a majorant of power `p` with constant `L_p` when
//! `f(y) ≤ f(x) + ⟨∇f(x), y − x⟩ + (L_p/p)‖y − x‖^p` for all `x, y`. That cannot be
//! certified from oracle access, so the checks below report the worst sampled
//! violation together with the pair (or triple) that produced it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::problem::{norm, Point, SmoothOracle};

/// Default absolute tolerance for the majorant checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const LAMBDA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Serialize)]
pub struct MajorantReport {
    pub holds: bool,
    /// Max over samples of `lhs − rhs`.
    pub worst_violation: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    /// Mixing weight of the worst sample (paraconcavity checks only).
    pub worst_lambda: Option<f64>,
    pub samples_checked: usize,
    pub tolerance: f64,
}

impl MajorantReport {
    fn new(tolerance: f64) -> Self {
        MajorantReport {
            holds: true,
            worst_violation: f64::NEG_INFINITY,
            worst_pair: None,
            worst_lambda: None,
            samples_checked: 0,
            tolerance,
        }
    }

    fn record(&mut self, violation: f64, x: &Point, y: &Point, lambda: Option<f64>) {
        self.samples_checked += 1;
        if violation > self.worst_violation || self.worst_pair.is_none() {
            self.worst_violation = violation;
            self.worst_pair = Some((x.to_vec(), y.to_vec()));
            self.worst_lambda = lambda;
        }
    }

    fn finish(mut self) -> Self {
        self.holds = self.worst_violation <= self.tolerance;
        self
    }
}

/// Source of point pairs for the sampled checks.
pub trait PairSampler {
    fn next_pair(&mut self, dim: usize) -> (Point, Point);
    /// A uniform draw from `[0, 1]`, used for convex-combination weights.
    fn unit(&mut self) -> f64;
}

/// Uniform pairs in a box, interleaved with near-diagonal pairs `y = x + δ`
/// where `‖δ‖` alternates between `1e−3` and `1e−1`.
#[derive(Debug, Clone)]
pub struct BoxSampler {
    lower: f64,
    upper: f64,
    rng: ChaCha8Rng,
    counter: usize,
}

impl BoxSampler {
    pub fn new(lower: f64, upper: f64, seed: u64) -> Self {
        assert!(lower < upper, "empty sampling box");
        BoxSampler {
            lower,
            upper,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter: 0,
        }
    }

    fn uniform_point(&mut self, dim: usize) -> Point {
        Point::from_shape_fn(dim, |_| self.rng.random_range(self.lower..=self.upper))
    }
}

impl PairSampler for BoxSampler {
    fn next_pair(&mut self, dim: usize) -> (Point, Point) {
        let slot = self.counter % 4;
        self.counter += 1;
        let x = self.uniform_point(dim);
        match slot {
            0 | 1 => {
                let y = self.uniform_point(dim);
                (x, y)
            }
            _ => {
                let radius = if slot == 2 { 1e-3 } else { 1e-1 };
                let mut dir =
                    Point::from_shape_fn(dim, |_| self.rng.sample::<f64, _>(StandardNormal));
                let n = norm(&dir);
                if n == 0.0 {
                    dir[0] = 1.0;
                } else {
                    dir /= n;
                }
                let y = &x + &(dir * radius);
                (x, y)
            }
        }
    }

    fn unit(&mut self) -> f64 {
        self.rng.random_range(0.0..=1.0)
    }
}

/// Cycles through an explicit list of pairs; handy for reproducing a witness.
#[derive(Debug, Clone)]
pub struct FixedPairs {
    pairs: Vec<(Point, Point)>,
    next: usize,
    rng: ChaCha8Rng,
}

impl FixedPairs {
    pub fn new(pairs: Vec<(Point, Point)>) -> Self {
        assert!(!pairs.is_empty(), "FixedPairs needs at least one pair");
        FixedPairs {
            pairs,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl PairSampler for FixedPairs {
    fn next_pair(&mut self, _dim: usize) -> (Point, Point) {
        let pair = self.pairs[self.next % self.pairs.len()].clone();
        self.next += 1;
        pair
    }

    fn unit(&mut self) -> f64 {
        self.rng.random_range(0.0..=1.0)
    }
}

fn validate_common(p: f64, constant: f64, n_samples: usize, name: &str) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    if !(constant > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {constant}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    Ok(())
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NotANumber(what))
    } else {
        Ok(v)
    }
}

/// Worst sampled value of `f(y) − f(x) − ⟨∇f(x), y − x⟩ − (L_p/p)‖y − x‖^p`.
pub fn check_majorant(
    f: &dyn SmoothOracle,
    p: f64,
    lp: f64,
    sampler: &mut dyn PairSampler,
    n_samples: usize,
    tol: f64,
) -> Result<MajorantReport> {
    validate_common(p, lp, n_samples, "L_p")?;
    let dim = f.dim();
    let mut report = MajorantReport::new(tol);
    for _ in 0..n_samples {
        let (x, y) = sampler.next_pair(dim);
        check_dim(dim, x.len())?;
        check_dim(dim, y.len())?;
        let fx = finite(f.value(&x), "majorant f(x)")?;
        let fy = finite(f.value(&y), "majorant f(y)")?;
        let grad = f.gradient(&x);
        let step = &y - &x;
        let violation = fy - fx - grad.dot(&step) - lp / p * norm(&step).powf(p);
        report.record(finite(violation, "majorant violation")?, &x, &y, None);
    }
    Ok(report.finish())
}

/// Worst sampled value of `λf(x) + (1−λ)f(y) − f(λx + (1−λ)y) − c‖x − y‖^p`.
///
/// Every pair is tested at `λ ∈ {0, ¼, ½, ¾, 1}` plus one uniform draw.
pub fn check_paraconcavity(
    f: &dyn SmoothOracle,
    p: f64,
    c: f64,
    sampler: &mut dyn PairSampler,
    n_samples: usize,
    tol: f64,
) -> Result<MajorantReport> {
    validate_common(p, c, n_samples, "c")?;
    let dim = f.dim();
    let mut report = MajorantReport::new(tol);
    for _ in 0..n_samples {
        let (x, y) = sampler.next_pair(dim);
        check_dim(dim, x.len())?;
        check_dim(dim, y.len())?;
        let fx = finite(f.value(&x), "paraconcavity f(x)")?;
        let fy = finite(f.value(&y), "paraconcavity f(y)")?;
        let slack = c * norm(&(&x - &y)).powf(p);
        let draw = sampler.unit();
        for lambda in LAMBDA_GRID.iter().copied().chain(std::iter::once(draw)) {
            let mix = &x * lambda + &y * (1.0 - lambda);
            let fm = finite(f.value(&mix), "paraconcavity f(mix)")?;
            let violation = lambda * fx + (1.0 - lambda) * fy - fm - slack;
            report.record(
                finite(violation, "paraconcavity violation")?,
                &x,
                &y,
                Some(lambda),
            );
        }
    }
    Ok(report.finish())
}

/// `‖g_cur − g_prev‖ / ‖x_cur − x_prev‖^{p−1}`.
pub fn estimate_lp(
    x_prev: &Point,
    x_cur: &Point,
    g_prev: &Point,
    g_cur: &Point,
    p: f64,
) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    check_dim(x_prev.len(), x_cur.len())?;
    check_dim(g_prev.len(), g_cur.len())?;
    let dx = norm(&(x_cur - x_prev));
    if dx == 0.0 {
        return Err(Error::IdenticalPoints(
            "L_p estimate needs distinct iterates",
        ));
    }
    finite(norm(&(g_cur - g_prev)) / dx.powf(p - 1.0), "L_p estimate")
}
