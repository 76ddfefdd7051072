//! Exact and inexact elements of the high-order forward-backward splitting map
//!
//! ```text
//! T(x) = argmin_y  f(x) + ⟨∇f(x), y − x⟩ + g(y) + ‖x − y‖^p / (pγ)
//! ```
//!
//! and the envelope value (the infimum of the same model). [`HifbsOracle`] is
//! the seam the outer solvers use; three implementations ship here:
//! [`SubgradientInner`] (normalized subgradient steps with geometrically
//! decaying lengths), [`GridInner`] (exhaustive search, dimension ≤ 2, for
//! tests) and [`NmfClosedForm`] (the cubic-root formula for regularized NMF).

mod cubic;
mod nmf;

pub use cubic::cubic_positive_root;
pub(crate) use nmf::bregman_step_nmf;
pub use nmf::{solve_hifbs_nmf, NmfClosedForm};

use crate::error::{check_dim, Error, Result};
use crate::problem::{check_gamma, norm, CompositeProblem, NonsmoothOracle, Point};

/// An approximate element `ȳ` of the splitting map at `x`.
#[derive(Debug, Clone)]
pub struct HifbsSolution {
    pub y_bar: Point,
    /// Model value at `ȳ`: the inexact envelope `F^ε(x)`.
    pub envelope_value: f64,
    /// `x − ȳ`.
    pub residual: Point,
    /// Accuracy budget charged for this solve. Not a certified gap.
    pub epsilon_used: f64,
    pub inner_iterations: usize,
}

impl HifbsSolution {
    pub(crate) fn new(
        problem: &CompositeProblem,
        x: &Point,
        y_bar: Point,
        gamma: f64,
        epsilon: f64,
        inner_iterations: usize,
    ) -> Result<Self> {
        let envelope_value = problem.model_value(x, &y_bar, gamma)?.value();
        Ok(HifbsSolution {
            residual: x - &y_bar,
            y_bar,
            envelope_value,
            epsilon_used: epsilon,
            inner_iterations,
        })
    }

    pub fn residual_norm(&self) -> f64 {
        norm(&self.residual)
    }
}

/// Computes `ȳ ≈ T(x)` and `F^ε(x)` for a given accuracy budget `ε`.
pub trait HifbsOracle: Send + Sync {
    fn solve(
        &self,
        problem: &CompositeProblem,
        x: &Point,
        gamma: f64,
        epsilon: f64,
    ) -> Result<HifbsSolution>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolverConfig {
    /// Decay base `β ∈ (0, 1)`; step `i` has length `β^{i+1}`.
    pub beta0: f64,
    pub max_inner: usize,
    /// Stop once a step moves the iterate less than this.
    pub step_tol: f64,
    /// Extra passes of `max_inner` steps from the best point, continuing the step
    /// decay past `step_tol`. Another pass follows unless the last one improved
    /// the model by a positive amount at most `ε`; no improvement at all means
    /// the steps were still too long.
    pub max_restarts: usize,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        InnerSolverConfig {
            beta0: 0.9,
            max_inner: 25,
            step_tol: 1e-3,
            max_restarts: 0,
        }
    }
}

impl InnerSolverConfig {
    pub fn with_beta0(beta0: f64) -> Self {
        InnerSolverConfig {
            beta0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta0 must lie in (0,1), got {}",
                self.beta0
            )));
        }
        if self.max_inner == 0 {
            return Err(Error::InvalidParameter("max_inner must be positive".into()));
        }
        if !(self.step_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "step_tol must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized subgradient descent on `y ↦ model(x, y, γ)` started at `y⁰ = x`.
///
/// Returns the best visited iterate by model value, not the last one.
pub fn solve_hifbs_sggdss(
    problem: &CompositeProblem,
    x: &Point,
    gamma: f64,
    cfg: &InnerSolverConfig,
) -> Result<HifbsSolution> {
    sggdss_with_target(problem, x, gamma, cfg, 0.0)
}

fn sggdss_with_target(
    problem: &CompositeProblem,
    x: &Point,
    gamma: f64,
    cfg: &InnerSolverConfig,
    epsilon: f64,
) -> Result<HifbsSolution> {
    cfg.validate()?;
    check_gamma(gamma)?;
    let lin = problem.linearize(x)?;

    let mut y = x.clone();
    let mut best = y.clone();
    let mut best_val = lin.model(&y, gamma)?;
    let mut step_len = cfg.beta0;
    let mut iterations = 0;

    'passes: for pass in 0..=cfg.max_restarts {
        if pass > 0 {
            y = best.clone();
        }
        let pass_start = best_val;
        for _ in 0..cfg.max_inner {
            let zeta = lin.model_subgradient(&y, gamma)?;
            let zn = norm(&zeta);
            if zn == 0.0 {
                // y is stationary for the model.
                if lin.model(&y, gamma)? <= best_val {
                    best = y;
                }
                break 'passes;
            }
            y.scaled_add(-step_len / zn, &zeta);
            iterations += 1;
            let val = lin.model(&y, gamma)?;
            if val < best_val {
                best_val = val;
                best.assign(&y);
            }
            let moved = step_len;
            step_len *= cfg.beta0;
            if pass == 0 && moved < cfg.step_tol {
                break;
            }
        }
        let gain = (pass_start - best_val).value();
        if gain > 0.0 && gain <= epsilon {
            break;
        }
    }

    HifbsSolution::new(problem, x, best, gamma, epsilon, iterations)
}

/// [`HifbsOracle`] backed by [`solve_hifbs_sggdss`].
#[derive(Debug, Clone, Default)]
pub struct SubgradientInner {
    pub config: InnerSolverConfig,
}

impl SubgradientInner {
    pub fn new(config: InnerSolverConfig) -> Self {
        SubgradientInner { config }
    }
}

impl HifbsOracle for SubgradientInner {
    fn solve(
        &self,
        problem: &CompositeProblem,
        x: &Point,
        gamma: f64,
        epsilon: f64,
    ) -> Result<HifbsSolution> {
        sggdss_with_target(problem, x, gamma, &self.config, epsilon)
    }
}

/// Closed interval for one coordinate of a search grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn centered(center: f64, half_width: f64) -> Self {
        Interval::new(center - half_width, center + half_width)
    }

    /// `resolution` points; for odd `resolution` the midpoint is hit exactly.
    fn points(&self, resolution: usize) -> Vec<f64> {
        let c = 0.5 * (self.lower + self.upper);
        let half = 0.5 * (self.upper - self.lower);
        let last = (resolution - 1) as f64;
        (0..resolution)
            .map(|i| c + half * ((2 * i) as f64 - last) / last)
            .collect()
    }
}

fn validate_grid(dim: usize, bounds: &[Interval], resolution: usize) -> Result<()> {
    if dim > 2 {
        return Err(Error::InvalidParameter(format!(
            "grid search supports dimension ≤ 2, got {dim}"
        )));
    }
    check_dim(dim, bounds.len())?;
    if resolution < 3 {
        return Err(Error::InvalidParameter(
            "grid resolution must be at least 3".into(),
        ));
    }
    if bounds.iter().any(|b| !(b.lower <= b.upper)) {
        return Err(Error::InvalidParameter("grid interval is empty".into()));
    }
    Ok(())
}

fn grid_argmin(
    dim: usize,
    bounds: &[Interval],
    resolution: usize,
    mut objective: impl FnMut(&Point) -> Result<f64>,
) -> Result<(Point, f64)> {
    let axes: Vec<Vec<f64>> = bounds.iter().map(|b| b.points(resolution)).collect();
    let mut y = Point::zeros(dim);
    let mut best = Point::zeros(dim);
    let mut best_val = f64::INFINITY;
    let mut found = false;
    let mut visit = |y: &Point, best: &mut Point, best_val: &mut f64| -> Result<()> {
        let v = objective(y)?;
        if !found || v < *best_val {
            found = true;
            *best_val = v;
            best.assign(y);
        }
        Ok(())
    };
    if dim == 1 {
        for &a in &axes[0] {
            y[0] = a;
            visit(&y, &mut best, &mut best_val)?;
        }
    } else {
        for &a in &axes[0] {
            for &b in &axes[1] {
                y[0] = a;
                y[1] = b;
                visit(&y, &mut best, &mut best_val)?;
            }
        }
    }
    Ok((best, best_val))
}

/// Exhaustive minimization of the model over a tensor grid (dimension ≤ 2).
pub fn solve_hifbs_grid(
    problem: &CompositeProblem,
    x: &Point,
    gamma: f64,
    bounds: &[Interval],
    resolution: usize,
) -> Result<HifbsSolution> {
    validate_grid(problem.dim(), bounds, resolution)?;
    check_gamma(gamma)?;
    let lin = problem.linearize(x)?;
    let (y_bar, _) = grid_argmin(problem.dim(), bounds, resolution, |y| {
        Ok(lin.model(y, gamma)?.value())
    })?;
    HifbsSolution::new(
        problem,
        x,
        y_bar,
        gamma,
        0.0,
        resolution.pow(problem.dim() as u32),
    )
}

/// Grid search for the high-order proximal point of `g` at `z`:
/// `argmin_y g(y) + ‖z − y‖^p / (pγ)`. Returns the minimizer and its value.
pub fn solve_hope_grid(
    g: &dyn NonsmoothOracle,
    z: &Point,
    gamma: f64,
    p: f64,
    bounds: &[Interval],
    resolution: usize,
) -> Result<(Point, f64)> {
    validate_grid(z.len(), bounds, resolution)?;
    check_gamma(gamma)?;
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    grid_argmin(z.len(), bounds, resolution, |y| {
        let v = g.value(y) + norm(&(z - y)).powf(p) / (p * gamma);
        if v.is_nan() {
            Err(Error::NotANumber("proximal objective"))
        } else {
            Ok(v)
        }
    })
}

/// [`HifbsOracle`] that grid-searches the box `x ± half_width` per coordinate.
#[derive(Debug, Clone)]
pub struct GridInner {
    pub half_width: f64,
    pub resolution: usize,
}

impl Default for GridInner {
    fn default() -> Self {
        GridInner {
            half_width: 5.0,
            resolution: 8001,
        }
    }
}

impl HifbsOracle for GridInner {
    fn solve(
        &self,
        problem: &CompositeProblem,
        x: &Point,
        gamma: f64,
        epsilon: f64,
    ) -> Result<HifbsSolution> {
        let bounds: Vec<Interval> = x
            .iter()
            .map(|&c| Interval::centered(c, self.half_width))
            .collect();
        let mut sol = solve_hifbs_grid(problem, x, gamma, &bounds, self.resolution)?;
        sol.epsilon_used = epsilon;
        Ok(sol)
    }
}
