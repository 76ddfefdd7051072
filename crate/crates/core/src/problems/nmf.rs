//! Regularized nonnegative matrix factorization
//!
//! ```text
//! min_{U ≥ 0, V ≥ 0}  ½‖X − UVᵀ‖_F² + λ(‖U‖₁ + ‖V‖₁)
//! ```
//!
//! and its reformulation `φ = f̃ + g̃` with `f̃ = −(h − f)` concave and
//! `g̃ = g + h`, where `h(U,V) = (a/4)(‖U‖_F² + ‖V‖_F²)² + (b/2)(‖U‖_F² + ‖V‖_F²)`.
//! With `a ≥ 3` and `b ≥ ‖X‖_F` the data term is 1-smooth relative to `h`.
//!
//! Points handed to generic solvers are `vec(U)` followed by `vec(V)`, both row-major.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::problem::{CompositeProblem, NonsmoothOracle, Point, SmoothOracle};

/// `L_p` shipped with the reformulated problem; any positive value is valid for concave `f̃`.
pub const REFORMULATED_LP: f64 = 1e-8;

/// Data, current factors and kernel parameters of one NMF problem.
#[derive(Debug, Clone)]
pub struct NmfState {
    pub x: Array2<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub lambda: f64,
    pub kernel_a: f64,
    pub kernel_b: f64,
    pub rank: usize,
}

pub(crate) fn frobenius(m: &ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl NmfState {
    /// Factors start at `0.1·ones`; kernel `a = 3`, `b = ‖X‖_F`.
    pub fn new(x: Array2<f64>, rank: usize, lambda: f64) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidParameter("rank must be positive".into()));
        }
        if x.is_empty() {
            return Err(Error::InvalidParameter("data matrix is empty".into()));
        }
        if x.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "data matrix must be nonnegative".into(),
            ));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        let (m, n) = x.dim();
        let b = frobenius(&x.view());
        Ok(NmfState {
            u: Array2::from_elem((m, rank), 0.1),
            v: Array2::from_elem((n, rank), 0.1),
            x,
            lambda,
            kernel_a: 3.0,
            kernel_b: b,
            rank,
        })
    }

    /// Synthetic `m×n` data with entries uniform on `[0, upper)`.
    pub fn synthetic(
        m: usize,
        n: usize,
        rank: usize,
        lambda: f64,
        upper: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(upper > 0.0) {
            return Err(Error::InvalidParameter(
                "upper bound must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..upper));
        NmfState::new(x, rank, lambda)
    }

    pub fn with_factors(mut self, u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        let (m, n) = self.x.dim();
        if u.dim() != (m, self.rank) || v.dim() != (n, self.rank) {
            return Err(Error::InvalidParameter(format!(
                "factor shapes {:?}/{:?} do not match data {m}×{n} at rank {}",
                u.dim(),
                v.dim(),
                self.rank
            )));
        }
        self.u = u;
        self.v = v;
        Ok(self)
    }

    /// Overrides the kernel; `force` skips the relative-smoothness check.
    pub fn with_kernel(mut self, a: f64, b: f64, force: bool) -> Result<Self> {
        self.kernel_a = a;
        self.kernel_b = b;
        if !force {
            self.validate_kernel()?;
        } else if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidParameter(
                "kernel parameters must be positive".into(),
            ));
        }
        Ok(self)
    }

    pub fn validate_kernel(&self) -> Result<()> {
        let xf = frobenius(&self.x.view());
        if self.kernel_a < 3.0 || self.kernel_b < xf {
            return Err(Error::InvalidParameter(format!(
                "kernel needs a ≥ 3 and b ≥ ‖X‖_F = {xf}; got a = {}, b = {}",
                self.kernel_a, self.kernel_b
            )));
        }
        Ok(())
    }

    /// `(m, n, r)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x.nrows(), self.x.ncols(), self.rank)
    }

    pub fn flatten(u: &Array2<f64>, v: &Array2<f64>) -> Point {
        u.iter().chain(v.iter()).copied().collect()
    }

    pub fn split(&self, point: &Point) -> Result<(Array2<f64>, Array2<f64>)> {
        let (m, n, r) = self.dims();
        check_dim((m + n) * r, point.len())?;
        let u = point
            .slice(s![..m * r])
            .to_owned()
            .into_shape_with_order((m, r));
        let v = point
            .slice(s![m * r..])
            .to_owned()
            .into_shape_with_order((n, r));
        match (u, v) {
            (Ok(u), Ok(v)) => Ok((u, v)),
            _ => Err(Error::DimensionMismatch {
                expected: (m + n) * r,
                found: point.len(),
            }),
        }
    }

    pub fn current_point(&self) -> Point {
        NmfState::flatten(&self.u, &self.v)
    }

    pub(crate) fn data(&self) -> NmfData {
        NmfData {
            x: self.x.clone(),
            rank: self.rank,
            lambda: self.lambda,
            a: self.kernel_a,
            b: self.kernel_b,
        }
    }

    pub fn objective_at(&self, u: &Array2<f64>, v: &Array2<f64>) -> f64 {
        self.data().objective(u, v)
    }

    /// `(∇_U f, ∇_V f)` of `f = ½‖X − UVᵀ‖_F²`.
    pub fn smooth_gradient(&self, u: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        self.data().smooth_gradient(u, v)
    }

    pub fn kernel_at(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
        self.data().kernel(u, v)
    }
}

/// Immutable copy of the pieces the oracles need.
#[derive(Debug, Clone)]
pub(crate) struct NmfData {
    pub x: Array2<f64>,
    pub rank: usize,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

impl NmfData {
    pub fn split<'p>(&self, point: &'p Point) -> (ArrayView2<'p, f64>, ArrayView2<'p, f64>) {
        let (m, n) = self.x.dim();
        let r = self.rank;
        let flat = point.as_slice().expect("points are contiguous");
        let u = ArrayView2::from_shape((m, r), &flat[..m * r]).expect("U block");
        let v = ArrayView2::from_shape((n, r), &flat[m * r..]).expect("V block");
        (u, v)
    }

    pub fn dim(&self) -> usize {
        (self.x.nrows() + self.x.ncols()) * self.rank
    }

    pub fn misfit(&self, u: &ArrayView2<f64>, v: &ArrayView2<f64>) -> Array2<f64> {
        u.dot(&v.t()) - &self.x
    }

    pub fn smooth_value(&self, u: &ArrayView2<f64>, v: &ArrayView2<f64>) -> f64 {
        0.5 * self.misfit(u, v).iter().map(|e| e * e).sum::<f64>()
    }

    pub fn smooth_gradient_view(
        &self,
        u: &ArrayView2<f64>,
        v: &ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let e = self.misfit(u, v);
        (e.dot(v), e.t().dot(u))
    }

    pub fn smooth_gradient(&self, u: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        self.smooth_gradient_view(&u.view(), &v.view())
    }

    fn squared_norms(u: &ArrayView2<f64>, v: &ArrayView2<f64>) -> f64 {
        u.iter().chain(v.iter()).map(|e| e * e).sum()
    }

    pub fn kernel_value(&self, u: &ArrayView2<f64>, v: &ArrayView2<f64>) -> f64 {
        let t = Self::squared_norms(u, v);
        0.25 * self.a * t * t + 0.5 * self.b * t
    }

    pub fn kernel_view(
        &self,
        u: &ArrayView2<f64>,
        v: &ArrayView2<f64>,
    ) -> (f64, Array2<f64>, Array2<f64>) {
        let t = Self::squared_norms(u, v);
        let scale = self.a * t + self.b;
        (
            0.25 * self.a * t * t + 0.5 * self.b * t,
            u * scale,
            v * scale,
        )
    }

    pub fn kernel(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
        self.kernel_view(&u.view(), &v.view())
    }

    /// `λ(‖U‖₁ + ‖V‖₁)` on the nonnegative orthant, `+∞` outside.
    pub fn regularizer(&self, u: &ArrayView2<f64>, v: &ArrayView2<f64>) -> f64 {
        if u.iter().chain(v.iter()).any(|e| *e < 0.0) {
            return f64::INFINITY;
        }
        self.lambda * u.iter().chain(v.iter()).sum::<f64>()
    }

    pub fn objective(&self, u: &Array2<f64>, v: &Array2<f64>) -> f64 {
        let reg = self.regularizer(&u.view(), &v.view());
        if reg.is_infinite() {
            return reg;
        }
        self.smooth_value(&u.view(), &v.view()) + reg
    }
}

/// `½‖X − UVᵀ‖_F² + λ(‖U‖₁ + ‖V‖₁)` at the state's factors; `+∞` if any entry is negative.
pub fn nmf_objective(state: &NmfState) -> f64 {
    state.objective_at(&state.u, &state.v)
}

/// `h(U, V)` and its gradient blocks `(a(‖U‖_F² + ‖V‖_F²) + b)·(U, V)`.
pub fn nmf_kernel(
    state: &NmfState,
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> (f64, Array2<f64>, Array2<f64>) {
    state.kernel_at(u, v)
}

/// `f̃ = f − h`: smooth and concave under the kernel condition.
struct ConcavePart(Arc<NmfData>);

impl SmoothOracle for ConcavePart {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &Point) -> f64 {
        let (u, v) = self.0.split(x);
        self.0.smooth_value(&u, &v) - self.0.kernel_value(&u, &v)
    }
    fn gradient(&self, x: &Point) -> Point {
        let (u, v) = self.0.split(x);
        let (gu, gv) = self.0.smooth_gradient_view(&u, &v);
        let (_, hu, hv) = self.0.kernel_view(&u, &v);
        NmfState::flatten(&(gu - hu), &(gv - hv))
    }
}

/// `g̃ = ι_{≥0} + λ‖·‖₁ + h`.
///
/// Subgradient selection: `∇h + λ` on positive entries and `∇h` on zero entries
/// (the minimal-norm choice from `(−∞, λ]` for the nonsmooth part).
struct ConvexPart(Arc<NmfData>);

impl NonsmoothOracle for ConvexPart {
    fn value(&self, x: &Point) -> f64 {
        let (u, v) = self.0.split(x);
        let reg = self.0.regularizer(&u, &v);
        if reg.is_infinite() {
            return reg;
        }
        reg + self.0.kernel_value(&u, &v)
    }
    fn subgradient(&self, x: &Point) -> Point {
        let (u, v) = self.0.split(x);
        let (_, hu, hv) = self.0.kernel_view(&u, &v);
        let lambda = self.0.lambda;
        let mut s = NmfState::flatten(&hu, &hv);
        s.zip_mut_with(x, |si, &xi| {
            if xi > 0.0 {
                *si += lambda;
            }
        });
        s
    }
    fn lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `φ = f̃ + g̃` with `p = 2`, `L_p` = [`REFORMULATED_LP`] and lower bound `0`.
pub fn nmf_reformulate(state: &NmfState) -> Result<CompositeProblem> {
    let data = Arc::new(state.data());
    CompositeProblem::new(
        Arc::new(ConcavePart(data.clone())),
        Arc::new(ConvexPart(data)),
        2.0,
    )?
    .with_lp_estimate(REFORMULATED_LP)
    .map(|p| p.with_lower_bound(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorant::{check_majorant, BoxSampler, PairSampler};
    use ndarray::array;

    fn small_state() -> NmfState {
        let x = array![[1.0, 2.0], [0.5, 0.0]];
        NmfState::new(x, 1, 0.3)
            .unwrap()
            .with_factors(array![[1.0], [0.5]], array![[0.7], [1.2]])
            .unwrap()
    }

    #[test]
    fn objective_exact_factorization() {
        let u = array![[1.0, 0.0], [0.5, 2.0], [0.0, 1.0]];
        let v = array![[2.0, 1.0], [0.0, 3.0]];
        let x = u.dot(&v.t());
        let st = NmfState::new(x, 2, 0.0)
            .unwrap()
            .with_factors(u, v)
            .unwrap();
        assert_eq!(nmf_objective(&st), 0.0);
    }

    #[test]
    fn objective_at_zero_factors() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let st = NmfState::new(x, 2, 0.7)
            .unwrap()
            .with_factors(Array2::zeros((2, 2)), Array2::zeros((2, 2)))
            .unwrap();
        assert_eq!(nmf_objective(&st), 15.0);
    }

    #[test]
    fn objective_hand_expansion() {
        let st = small_state();
        // UVᵀ = [[0.7, 1.2], [0.35, 0.6]]
        let resid = [1.0 - 0.7, 2.0 - 1.2, 0.5 - 0.35, 0.0 - 0.6];
        let fit: f64 = 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
        let reg = 0.3 * (1.0 + 0.5 + 0.7 + 1.2);
        assert!((nmf_objective(&st) - (fit + reg)).abs() < 1e-14);
        let neg = st
            .clone()
            .with_factors(array![[-1.0], [0.5]], array![[0.7], [1.2]])
            .unwrap();
        assert_eq!(nmf_objective(&neg), f64::INFINITY);
    }

    #[test]
    fn kernel_examples() {
        let x = array![[1.0]];
        let st = NmfState::new(x, 1, 0.0)
            .unwrap()
            .with_kernel(3.0, 1.0, false)
            .unwrap();
        let (h, gu, gv) = nmf_kernel(&st, &array![[0.0]], &array![[0.0]]);
        assert_eq!((h, gu[[0, 0]], gv[[0, 0]]), (0.0, 0.0, 0.0));
        let (h, gu, gv) = nmf_kernel(&st, &array![[1.0]], &array![[0.0]]);
        assert_eq!(h, 1.25);
        assert_eq!(gu[[0, 0]], 4.0);
        assert_eq!(gv[[0, 0]], 0.0);
        let step = 1e-6;
        let (hp, _, _) = nmf_kernel(&st, &array![[1.0 + step]], &array![[0.0]]);
        let (hm, _, _) = nmf_kernel(&st, &array![[1.0 - step]], &array![[0.0]]);
        assert!(((hp - hm) / (2.0 * step) - 4.0).abs() < 1e-7);
    }

    #[test]
    fn kernel_polynomial_in_scale() {
        let st = small_state();
        let (u, v) = (st.u.clone(), st.v.clone());
        let s0 = u.iter().chain(v.iter()).map(|e| e * e).sum::<f64>();
        for t in [0.0, 0.5, 1.0, 1.7, 3.0] {
            let (h, _, _) = nmf_kernel(&st, &(&u * t), &(&v * t));
            let s = s0 * t * t;
            let expect = 0.25 * st.kernel_a * s * s + 0.5 * st.kernel_b * s;
            assert!((h - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn kernel_condition_enforced() {
        let x = array![[3.0, 4.0]];
        let st = NmfState::new(x, 1, 0.1).unwrap();
        assert_eq!(st.kernel_b, 5.0);
        assert!(st.clone().with_kernel(3.0, 4.9, false).is_err());
        assert!(st.clone().with_kernel(2.0, 5.0, false).is_err());
        assert!(st.with_kernel(3.0, 4.9, true).is_ok());
    }

    #[test]
    fn reformulation_is_exact() {
        let st = NmfState::synthetic(4, 3, 2, 0.2, 1.0, 5).unwrap();
        let prob = nmf_reformulate(&st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let u = Array2::from_shape_fn((4, 2), |_| rng.random_range(0.0..2.0));
            let v = Array2::from_shape_fn((3, 2), |_| rng.random_range(0.0..2.0));
            let phi = prob.objective(&NmfState::flatten(&u, &v)).unwrap().value();
            let direct = st.objective_at(&u, &v);
            assert!((phi - direct).abs() <= 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn reformulated_smooth_part_is_concave_enough() {
        let st = NmfState::synthetic(3, 3, 2, 0.1, 1.0, 2).unwrap();
        let prob = nmf_reformulate(&st).unwrap();
        let mut sampler = NonnegativeSampler(BoxSampler::new(0.0, 2.0, 8));
        let report =
            check_majorant(prob.smooth().as_ref(), 2.0, 1e-6, &mut sampler, 2000, 1e-9).unwrap();
        assert!(report.holds, "{}", report.worst_violation);
    }

    /// Near-diagonal pairs can step just below zero; reflect them back.
    struct NonnegativeSampler(BoxSampler);

    impl PairSampler for NonnegativeSampler {
        fn next_pair(&mut self, dim: usize) -> (Point, Point) {
            let (x, y) = self.0.next_pair(dim);
            (x.mapv(f64::abs), y.mapv(f64::abs))
        }
        fn unit(&mut self) -> f64 {
            self.0.unit()
        }
    }

    #[test]
    fn reformulated_gradient_matches_finite_differences() {
        let st = NmfState::synthetic(3, 3, 3, 0.1, 1.0, 4).unwrap();
        let prob = nmf_reformulate(&st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Point::from_shape_fn(prob.dim(), |_| rng.random_range(0.1..1.0));
        let g = prob.smooth_gradient(&x).unwrap();
        let h = 1e-6;
        for i in 0..prob.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd =
                (prob.smooth_value(&xp).unwrap() - prob.smooth_value(&xm).unwrap()) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn split_inverts_flatten() {
        let st = small_state();
        let p = st.current_point();
        let (u, v) = st.split(&p).unwrap();
        assert_eq!((u, v), (st.u.clone(), st.v.clone()));
        assert!(st.split(&Point::zeros(3)).is_err());
    }

    #[test]
    fn rejects_negative_data() {
        assert!(NmfState::new(array![[1.0, -0.1]], 1, 0.1).is_err());
        assert!(NmfState::new(array![[1.0, f64::NAN]], 1, 0.1).is_err());
    }
}
