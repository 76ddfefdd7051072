//! `ℓ_q` linear inverse problems with a clipped quadratic penalty:
//!
//! ```text
//! min_x  (1/q)‖Ax − b‖_q^q + λ Σ_i ψ(x_i),   ψ(t) = 2|t| − t²  if |t| ≤ 1,  1 otherwise
//! ```
//!
//! The fidelity term has a majorant of power `p = q`.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::{norm, CompositeProblem, NonsmoothOracle, Point, SmoothOracle};

/// Generator settings for [`gen_inverse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseParams {
    pub m: usize,
    pub n: usize,
    /// Fraction of nonzero entries in `x_true`.
    pub sparsity: f64,
    /// Laplace scale relative to `‖A x_true‖ / √(2m)`.
    pub noise_level: f64,
    pub q: f64,
    pub lambda: f64,
}

impl Default for InverseParams {
    fn default() -> Self {
        InverseParams {
            m: 500,
            n: 1000,
            sparsity: 0.1,
            noise_level: 0.1,
            q: 1.1,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseInstance {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub x_true: Array1<f64>,
    pub q: f64,
    pub lambda: f64,
    /// Laplace scale actually used for the noise.
    pub noise_scale: f64,
}

/// JSON-friendly copy of an instance (matrix as nested rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSnapshot {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
    pub q: f64,
    pub lambda: f64,
    pub noise_scale: f64,
}

pub(crate) fn validate_q(q: f64) -> Result<()> {
    if q > 1.0 && q <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "q must lie in (1, 2], got {q}"
        )))
    }
}

/// Laplace scale `s = noise_level · ‖b_true‖ / √(2m)`.
pub fn laplace_scale(clean_norm: f64, m: usize, noise_level: f64) -> f64 {
    noise_level * clean_norm / (2.0 * m as f64).sqrt()
}

/// Draws a seeded instance.
///
/// Draw order on a ChaCha8 stream seeded with `seed`: the entries of `A`
/// row-major as `N(0, 1/m)`; the support of `x_true` (⌈sparsity·n⌉ distinct
/// positions, uniform); its magnitudes as `N(0, 25)` in support order; then
/// Laplace noise by inverse CDF, `−s·sign(u)·ln(1 − 2|u|)` with `u + ½ ∈ (0, 1)`.
pub fn gen_inverse(params: &InverseParams, seed: u64) -> Result<InverseInstance> {
    let InverseParams {
        m,
        n,
        sparsity,
        noise_level,
        q,
        lambda,
    } = *params;
    validate_q(q)?;
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "instance dimensions must be positive".into(),
        ));
    }
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sparsity must lie in (0,1), got {sparsity}"
        )));
    }
    if sparsity * (n as f64) < 1.0 {
        return Err(Error::InvalidParameter(
            "sparsity·n must be at least 1".into(),
        ));
    }
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise level must be nonnegative".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_a = 1.0 / (m as f64).sqrt();
    let a = Array2::from_shape_fn((m, n), |_| std_a * rng.sample::<f64, _>(StandardNormal));

    let nnz = (sparsity * n as f64).ceil() as usize;
    let support = rand::seq::index::sample(&mut rng, n, nnz);
    let mut x_true = Array1::zeros(n);
    for i in support.iter() {
        x_true[i] = 5.0 * rng.sample::<f64, _>(StandardNormal);
    }

    let clean = a.dot(&x_true);
    let s = laplace_scale(norm(&clean), m, noise_level);
    let noise = Array1::from_shape_fn(m, |_| {
        let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
        -s * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    });
    let b = clean + noise;

    Ok(InverseInstance {
        a,
        b,
        x_true,
        q,
        lambda,
        noise_scale: s,
    })
}

impl InverseInstance {
    pub fn dims(&self) -> (usize, usize) {
        self.a.dim()
    }

    /// `φ = (1/q)‖Ax − b‖_q^q + clipped penalty`, with `p = q` and lower bound 0.
    pub fn problem(&self) -> Result<CompositeProblem> {
        let f = LqFidelity::new(Arc::new(self.a.clone()), Arc::new(self.b.clone()), self.q)?;
        let g = ClippedPenalty::new(self.lambda);
        CompositeProblem::new(Arc::new(f), Arc::new(g), self.q)
    }

    pub fn snapshot(&self) -> InverseSnapshot {
        InverseSnapshot {
            a: self.a.outer_iter().map(|row| row.to_vec()).collect(),
            b: self.b.to_vec(),
            x_true: self.x_true.to_vec(),
            q: self.q,
            lambda: self.lambda,
            noise_scale: self.noise_scale,
        }
    }

    pub fn from_snapshot(s: &InverseSnapshot) -> Result<Self> {
        let m = s.a.len();
        let n = s.a.first().map_or(0, Vec::len);
        if s.a.iter().any(|row| row.len() != n) {
            return Err(Error::Parse("ragged matrix in snapshot".into()));
        }
        check_dim(m, s.b.len())?;
        check_dim(n, s.x_true.len())?;
        validate_q(s.q)?;
        let flat: Vec<f64> = s.a.iter().flatten().copied().collect();
        let a = Array2::from_shape_vec((m, n), flat).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(InverseInstance {
            a,
            b: Array1::from(s.b.clone()),
            x_true: Array1::from(s.x_true.clone()),
            q: s.q,
            lambda: s.lambda,
            noise_scale: s.noise_scale,
        })
    }
}

/// `f(x) = (1/q)‖Ax − b‖_q^q`.
#[derive(Debug, Clone)]
pub struct LqFidelity {
    a: Arc<Array2<f64>>,
    b: Arc<Array1<f64>>,
    q: f64,
}

impl LqFidelity {
    pub fn new(a: Arc<Array2<f64>>, b: Arc<Array1<f64>>, q: f64) -> Result<Self> {
        validate_q(q)?;
        check_dim(a.nrows(), b.len())?;
        Ok(LqFidelity { a, b, q })
    }

    fn residual(&self, x: &Point) -> Array1<f64> {
        self.a.dot(x) - &*self.b
    }

    fn value_from_residual(&self, r: &Array1<f64>) -> f64 {
        r.iter().map(|v| v.abs().powf(self.q)).sum::<f64>() / self.q
    }

    fn gradient_from_residual(&self, r: &Array1<f64>) -> Point {
        let q = self.q;
        let w = r.mapv(|v| v.abs().powf(q - 1.0).copysign(v));
        self.a.t().dot(&w)
    }
}

impl SmoothOracle for LqFidelity {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn value(&self, x: &Point) -> f64 {
        self.value_from_residual(&self.residual(x))
    }
    fn gradient(&self, x: &Point) -> Point {
        self.gradient_from_residual(&self.residual(x))
    }
    fn lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Value and gradient of the fidelity term at `x`.
pub fn lq_fidelity(instance: &InverseInstance, x: &Point) -> Result<(f64, Point)> {
    check_dim(instance.a.ncols(), x.len())?;
    validate_q(instance.q)?;
    let f = LqFidelity {
        a: Arc::new(instance.a.clone()),
        b: Arc::new(instance.b.clone()),
        q: instance.q,
    };
    let r = f.residual(x);
    Ok((f.value_from_residual(&r), f.gradient_from_residual(&r)))
}

/// `λ Σ ψ(x_i)` with the clipped quadratic `ψ`.
///
/// Subgradient selection: `2λ(sign(x_i) − x_i)` on `0 < |x_i| < 1`, `0` on
/// `|x_i| ≥ 1`, and `0` at `x_i = 0` (the minimal-norm element of `[−2λ, 2λ]`).
#[derive(Debug, Clone, Copy)]
pub struct ClippedPenalty {
    pub lambda: f64,
}

impl ClippedPenalty {
    pub fn new(lambda: f64) -> Self {
        ClippedPenalty { lambda }
    }
}

fn clipped_scalar(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        2.0 * a - t * t
    } else {
        1.0
    }
}

fn clipped_slope(t: f64) -> f64 {
    let a = t.abs();
    if t == 0.0 || a >= 1.0 {
        0.0
    } else {
        2.0 * (t.signum() - t)
    }
}

impl NonsmoothOracle for ClippedPenalty {
    fn value(&self, x: &Point) -> f64 {
        self.lambda * x.iter().copied().map(clipped_scalar).sum::<f64>()
    }
    fn subgradient(&self, x: &Point) -> Point {
        x.mapv(|t| self.lambda * clipped_slope(t))
    }
    fn lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Value and selected subgradient of the clipped penalty.
pub fn clipped_penalty(x: &Point, lambda: f64) -> (f64, Point) {
    let g = ClippedPenalty::new(lambda);
    (g.value(x), g.subgradient(x))
}

/// `10·log10(‖x_true‖ / ‖x_hat − x_true‖)`, unsquared; `+∞` on exact recovery.
pub fn snr_db(x_true: &Point, x_hat: &Point) -> f64 {
    let err = norm(&(x_hat - x_true));
    if err == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (norm(x_true) / err).log10()
}

/// Conventional power ratio `10·log10(‖x_true‖² / ‖x_hat − x_true‖²)`.
pub fn snr_db_power(x_true: &Point, x_hat: &Point) -> f64 {
    2.0 * snr_db(x_true, x_hat)
}

/// `‖x_hat − x_true‖ / ‖x_true‖`.
pub fn relative_error(x_true: &Point, x_hat: &Point) -> f64 {
    norm(&(x_hat - x_true)) / norm(x_true)
}
