//! Outer loops: plain HiFBA (`x_{k+1} = ȳ_k`) and Boosted HiFBA.
//!
//! A boosted step solves the splitting subproblem at `x_k`, picks a direction
//! `d`, and backtracks over `α = ϑ^m` on the candidates
//! `x̂ = (1 − α)ȳ + α(x_k + d)` until
//!
//! ```text
//! F^{ε_{k+1}}(x̂) ≤ F^{ε_k}(x_k) − σ‖x_k − ȳ‖^p + ε_k + ε_{k+1}.
//! ```
//!
//! Runs with fixed `γ, σ` carry three monitors: the acceptance inequality
//! itself, the Lyapunov value `F^{ε_k}(x_k) + Σ_{j≥k} ε_j + Σ_{j≥k+1} ε_j`
//! (tracked as `F^{ε_k}(x_k) − P_k − P_{k+1}` with prefix sums `P_k = Σ_{j<k} ε_j`,
//! which differs by a constant), and the running residual-sum bound.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hifbs::{HifbsOracle, HifbsSolution};
use crate::majorant::estimate_lp;
use crate::problem::{norm, CompositeProblem, Point};

/// Absolute monitor tolerance, scaled by `max(1, |value|)`.
pub const MONITOR_TOLERANCE: f64 = 1e-10;

const LP_CLAMP: (f64, f64) = (1e-12, 1e12);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    None,
    Spectral,
}

/// `A`: the proximal point `ȳ`. `C`: `(1 − α)ȳ + α(x + d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Structural {
    A,
    C,
}

/// Summable accuracy targets for the inner solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// `scale / (k + 1)²`.
    InverseSquare { scale: f64 },
    /// `scale · rate^k`.
    Geometric { scale: f64, rate: f64 },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::InverseSquare { scale: 1.0 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            EpsilonSchedule::InverseSquare { scale } => {
                let d = (k + 1) as f64;
                scale / (d * d)
            }
            EpsilonSchedule::Geometric { scale, rate } => scale * rate.powi(k as i32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsilonSchedule::InverseSquare { scale } => scale > 0.0 && scale.is_finite(),
            EpsilonSchedule::Geometric { scale, rate } => {
                scale > 0.0 && scale.is_finite() && rate > 0.0 && rate < 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "epsilon schedule {self:?} is not positive and summable"
            )))
        }
    }
}

/// Prefix sums `P_k = Σ_{j<k} ε_j`, accumulated in index order.
#[derive(Debug, Clone)]
struct PrefixSums {
    schedule: EpsilonSchedule,
    sums: Vec<f64>,
}

impl PrefixSums {
    fn new(schedule: EpsilonSchedule) -> Self {
        PrefixSums {
            schedule,
            sums: vec![0.0],
        }
    }

    fn get(&mut self, k: usize) -> f64 {
        while self.sums.len() <= k {
            let j = self.sums.len() - 1;
            let next = self.sums[j] + self.schedule.at(j);
            self.sums.push(next);
        }
        self.sums[k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Step parameter; the initial value when `adaptive_lp` is set.
    pub gamma: f64,
    /// Sufficient-decrease weight; the initial value when `adaptive_lp` is set.
    pub sigma: f64,
    pub vartheta: f64,
    pub epsilon: EpsilonSchedule,
    pub max_outer: usize,
    pub max_backtracks: usize,
    pub direction: Direction,
    pub structural: Structural,
    pub adaptive_lp: bool,
    pub stop_residual_tol: f64,
    pub time_budget: Option<Duration>,
    /// Abort with [`Error::InvariantViolated`] when a monitor fails.
    pub strict_monitors: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 1.0,
            sigma: 1.0,
            vartheta: 0.72,
            epsilon: EpsilonSchedule::default(),
            max_outer: 1000,
            max_backtracks: 60,
            direction: Direction::Spectral,
            structural: Structural::C,
            adaptive_lp: false,
            stop_residual_tol: 1e-6,
            time_budget: None,
            strict_monitors: true,
        }
    }
}

impl SolverConfig {
    /// Plain HiFBA: no direction, `x_{k+1} = ȳ_k`.
    pub fn plain(gamma: f64, sigma: f64) -> Self {
        SolverConfig {
            gamma,
            sigma,
            direction: Direction::None,
            structural: Structural::A,
            ..Default::default()
        }
    }

    pub fn boosted(gamma: f64, sigma: f64) -> Self {
        SolverConfig {
            gamma,
            sigma,
            ..Default::default()
        }
    }

    /// `γ` and `σ` recomputed every iteration from a secant estimate of `L_p`, starting at `γ = σ = 1`.
    pub fn adaptive(mut self) -> Self {
        self.adaptive_lp = true;
        self
    }

    pub fn is_plain(&self) -> bool {
        self.structural == Structural::A
    }

    /// Checks `γ ∈ (0, 1/L_p)` and `σ ∈ (0, (1 − γL_p)/(pγ))` unless `L_p` is adaptive.
    pub fn validate(&self, p: f64, lp: Option<f64>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.vartheta > 0.0 && self.vartheta < 1.0) {
            return bad(format!("vartheta must lie in (0,1), got {}", self.vartheta));
        }
        if !(self.stop_residual_tol >= 0.0) {
            return bad("stop_residual_tol must be nonnegative".into());
        }
        self.epsilon.validate()?;
        if self.adaptive_lp {
            return Ok(());
        }
        let Some(lp) = lp else {
            return bad("fixed-step mode needs an L_p estimate on the problem".into());
        };
        if self.gamma * lp >= 1.0 {
            return bad(format!(
                "gamma = {} must be below 1/L_p = {}",
                self.gamma,
                1.0 / lp
            ));
        }
        let sigma_max = (1.0 - self.gamma * lp) / (p * self.gamma);
        if self.sigma >= sigma_max {
            return bad(format!(
                "sigma = {} must be below (1 − γL_p)/(pγ) = {sigma_max}",
                self.sigma
            ));
        }
        Ok(())
    }
}

/// Wall-clock and iteration limits checked between outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Budget {
    pub max_iters: Option<usize>,
    pub max_time: Option<Duration>,
}

impl Budget {
    pub fn iterations(k: usize) -> Self {
        Budget {
            max_iters: Some(k),
            max_time: None,
        }
    }

    pub fn seconds(s: f64) -> Self {
        Budget {
            max_iters: None,
            max_time: Some(Duration::from_secs_f64(s)),
        }
    }

    pub(crate) fn status(&self, k: usize, started: Instant) -> Option<Status> {
        if self.max_iters.is_some_and(|m| k >= m) {
            return Some(Status::MaxOuter);
        }
        if self.max_time.is_some_and(|t| started.elapsed() >= t) {
            return Some(Status::Budget);
        }
        None
    }
}

/// History for the Barzilai-Borwein-type scaling `ω̂ = ⟨s,s⟩/⟨s,y⟩`.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub omega_prev: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub x_prev: Option<Point>,
    pub r_prev: Option<Point>,
}

impl Default for SpectralState {
    fn default() -> Self {
        SpectralState {
            omega_prev: 1.0,
            omega_min: 1e-1,
            omega_max: 1e10,
            x_prev: None,
            r_prev: None,
        }
    }
}

impl SpectralState {
    /// `|ω̂|` when it lies in `[ω_min, ω_max]`; otherwise 1, `1e5` or `1/‖r‖` by the size of `r`.
    pub fn omega(&self, s: &Point, y: &Point, r_cur: &Point) -> f64 {
        let sy = s.dot(y);
        if sy != 0.0 {
            let w = (s.dot(s) / sy).abs();
            if w >= self.omega_min && w <= self.omega_max {
                return w;
            }
        }
        let rn = norm(r_cur);
        if rn > 1.0 {
            1.0
        } else if rn < 1e-5 {
            1e5
        } else {
            1.0 / rn
        }
    }

    pub fn reset(&mut self) {
        self.x_prev = None;
        self.r_prev = None;
    }
}

/// `(ω, d = −ω·r_cur)` from the stored history; `ω = 1` on the first call.
/// The history is replaced by `(x_cur, r_cur)`.
pub fn spectral_direction(state: &mut SpectralState, x_cur: &Point, r_cur: &Point) -> (f64, Point) {
    let omega = match (&state.x_prev, &state.r_prev) {
        (Some(xp), Some(rp)) => state.omega(&(x_cur - xp), &(r_cur - rp), r_cur),
        _ => 1.0,
    };
    state.omega_prev = omega;
    state.x_prev = Some(x_cur.clone());
    state.r_prev = Some(r_cur.clone());
    (omega, r_cur * -omega)
}

/// Next iterate from the proximal point `ȳ`, base point `x` and direction `d`.
pub fn structural_iterate(
    kind: Structural,
    alpha: f64,
    x: &Point,
    y_bar: &Point,
    d: &Point,
) -> Point {
    match kind {
        Structural::A => y_bar.clone(),
        Structural::C => {
            let mut out = y_bar * (1.0 - alpha);
            out.scaled_add(alpha, x);
            out.scaled_add(alpha, d);
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// Wall-clock budget spent.
    Budget,
    MaxOuter,
}

/// One row per outer iteration `k`: the state at `x_k` and the step taken from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverRecord {
    pub k: usize,
    /// `φ` at the reported point: `ȳ_k` for the HiFBA family, `x_k` for subgradient methods.
    pub phi: f64,
    /// `F^{ε_k}(x_k)` (best-so-far `φ` for subgradient baselines).
    pub envelope_inexact: f64,
    pub residual_norm: f64,
    /// Accepted `α` (0 when no step was taken).
    pub alpha: f64,
    pub backtracks: usize,
    pub epsilon_k: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub wall_time_ms: f64,
    /// The step gave up on backtracking and took `x_{k+1} = ȳ_k`.
    pub fallback: bool,
    /// The acceptance inequality held for the step taken.
    pub descent_ok: bool,
    pub inner_iterations: usize,
}

/// Worst values seen by the runtime monitors (positive means violated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorSummary {
    pub acceptance_worst: f64,
    pub lyapunov_worst: f64,
    pub summability_worst: f64,
    /// Steps on which all three monitors ran.
    pub checked_steps: usize,
    pub fallbacks: usize,
}

impl Default for MonitorSummary {
    fn default() -> Self {
        MonitorSummary {
            acceptance_worst: f64::NEG_INFINITY,
            lyapunov_worst: f64::NEG_INFINITY,
            summability_worst: f64::NEG_INFINITY,
            checked_steps: 0,
            fallbacks: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverTrace {
    pub method: String,
    pub records: Vec<SolverRecord>,
    pub status: Status,
    pub monitors: MonitorSummary,
    /// Final iterate `x_K`.
    #[serde(skip)]
    pub x_final: Point,
    /// Reported point of the last record (`ȳ_K`, or the best iterate for subgradient methods).
    #[serde(skip)]
    pub output: Point,
}

impl SolverTrace {
    pub fn last(&self) -> &SolverRecord {
        self.records
            .last()
            .expect("traces hold at least one record")
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// What an observer sees after each record is pushed.
pub struct IterationView<'a> {
    pub k: usize,
    pub x: &'a Point,
    /// The point `phi` was evaluated at.
    pub output: &'a Point,
}

/// Result of one boosted or plain step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_next: Point,
    /// Solve at `x_next` with budget `ε_{k+1}`; reusable as the next iteration's solve.
    pub next_solution: HifbsSolution,
    pub alpha: f64,
    pub backtracks: usize,
    pub fallback: bool,
    /// `F^{ε_{k+1}}(x_{k+1}) − (F^{ε_k}(x_k) − σ‖R‖^p + ε_k + ε_{k+1})`.
    pub acceptance_gap: f64,
    pub inner_iterations: usize,
}

fn inner_error(k: usize, e: Error) -> Error {
    Error::InnerSolver {
        iteration: k,
        source: Box::new(e),
    }
}

/// One outer step from `x_k` given the solve `current` at `x_k` with budget `ε_k`.
#[allow(clippy::too_many_arguments)]
pub fn boosted_step(
    problem: &CompositeProblem,
    oracle: &dyn HifbsOracle,
    k: usize,
    x_k: &Point,
    current: &HifbsSolution,
    d: &Point,
    cfg: &SolverConfig,
    gamma: f64,
    sigma: f64,
) -> Result<StepOutcome> {
    let eps_k = cfg.epsilon.at(k);
    let eps_next = cfg.epsilon.at(k + 1);
    let target = current.envelope_value - sigma * current.residual_norm().powf(problem.p())
        + eps_k
        + eps_next;
    let tries = if cfg.structural == Structural::A {
        1
    } else {
        cfg.max_backtracks + 1
    };
    let mut inner = 0;
    let mut alpha = 1.0;
    for m in 0..tries {
        let x_hat = structural_iterate(cfg.structural, alpha, x_k, &current.y_bar, d);
        let sol = oracle
            .solve(problem, &x_hat, gamma, eps_next)
            .map_err(|e| inner_error(k, e))?;
        inner += sol.inner_iterations;
        let gap = sol.envelope_value - target;
        // Plain steps are taken regardless; the inequality is only recorded.
        if gap <= 0.0 || cfg.structural == Structural::A {
            return Ok(StepOutcome {
                x_next: x_hat,
                next_solution: sol,
                alpha: if cfg.structural == Structural::A {
                    1.0
                } else {
                    alpha
                },
                backtracks: m,
                fallback: false,
                acceptance_gap: gap,
                inner_iterations: inner,
            });
        }
        alpha *= cfg.vartheta;
    }
    let x_next = current.y_bar.clone();
    let sol = oracle
        .solve(problem, &x_next, gamma, eps_next)
        .map_err(|e| inner_error(k, e))?;
    inner += sol.inner_iterations;
    Ok(StepOutcome {
        acceptance_gap: sol.envelope_value - target,
        x_next,
        next_solution: sol,
        alpha: 0.0,
        backtracks: cfg.max_backtracks,
        fallback: true,
        inner_iterations: inner,
    })
}

/// Lyapunov and summability bookkeeping over a stretch of steps with fixed `γ, σ`.
#[derive(Debug, Clone)]
struct Segment {
    start: usize,
    start_envelope: f64,
    residual_sum: f64,
    last_lyapunov: f64,
}

struct Monitors {
    prefix: PrefixSums,
    lower_bound: Option<f64>,
    strict: bool,
    segment: Option<Segment>,
    summary: MonitorSummary,
}

fn scaled(v: f64) -> f64 {
    MONITOR_TOLERANCE * v.abs().max(1.0)
}

impl Monitors {
    fn lyapunov(&mut self, k: usize, envelope: f64) -> f64 {
        envelope - self.prefix.get(k) - self.prefix.get(k + 1)
    }

    fn start(&mut self, k: usize, envelope: f64) {
        let last_lyapunov = self.lyapunov(k, envelope);
        self.segment = Some(Segment {
            start: k,
            start_envelope: envelope,
            residual_sum: 0.0,
            last_lyapunov,
        });
    }

    fn fail(&self, name: &'static str, violation: f64, k: usize) -> Result<()> {
        if self.strict {
            Err(Error::InvariantViolated {
                name,
                violation,
                iteration: k,
            })
        } else {
            Ok(())
        }
    }

    /// Checks the step `k → k + 1`. `residual_pow` is `‖R^{ε_k}(x_k)‖^p`.
    fn check(
        &mut self,
        k: usize,
        current_env: f64,
        next_env: f64,
        residual_pow: f64,
        sigma: f64,
        acceptance_gap: f64,
    ) -> Result<()> {
        if self.segment.is_none() {
            self.start(k, current_env);
        }
        self.summary.checked_steps += 1;
        self.summary.acceptance_worst = self.summary.acceptance_worst.max(acceptance_gap);
        if acceptance_gap > scaled(current_env) {
            self.fail("acceptance inequality", acceptance_gap, k)?;
        }

        let v_next = self.lyapunov(k + 1, next_env);
        let seg = self.segment.as_mut().expect("segment started above");
        let lyap_gap = v_next - seg.last_lyapunov;
        let lyap_scale = seg.last_lyapunov;
        seg.last_lyapunov = v_next;
        seg.residual_sum += residual_pow;
        let (start, start_env, residual_sum) = (seg.start, seg.start_envelope, seg.residual_sum);
        self.summary.lyapunov_worst = self.summary.lyapunov_worst.max(lyap_gap);
        if lyap_gap > scaled(lyap_scale) {
            self.fail("Lyapunov descent", lyap_gap, k)?;
        }

        if let Some(lb) = self.lower_bound {
            let eps_sum = self.prefix.get(k + 2) - self.prefix.get(start);
            let bound = (start_env - lb + 2.0 * eps_sum) / sigma;
            let gap = residual_sum - bound;
            self.summary.summability_worst = self.summary.summability_worst.max(gap);
            if gap > scaled(bound) {
                self.fail("residual summability", gap, k)?;
            }
        }
        Ok(())
    }
}

/// Runs HiFBA (plain when `structural = A`) from `x0` until the residual
/// drops below `stop_residual_tol`, `max_outer` steps, or the time budget.
pub fn run(
    problem: &CompositeProblem,
    oracle: &dyn HifbsOracle,
    x0: &Point,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    run_with_observer(problem, oracle, x0, cfg, &mut |_| {})
}

pub fn run_with_observer(
    problem: &CompositeProblem,
    oracle: &dyn HifbsOracle,
    x0: &Point,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SolverTrace> {
    cfg.validate(problem.p(), problem.lp_estimate())?;
    crate::error::check_dim(problem.dim(), x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "starting point must be finite".into(),
        ));
    }
    let p = problem.p();
    let started = Instant::now();
    let budget = Budget {
        max_iters: Some(cfg.max_outer),
        max_time: cfg.time_budget,
    };
    let method = if cfg.is_plain() {
        "hifba"
    } else {
        "boosted_hifba"
    };

    let (mut gamma, mut sigma) = (cfg.gamma, cfg.sigma);
    let mut x = x0.clone();
    let mut sol = oracle
        .solve(problem, &x, gamma, cfg.epsilon.at(0))
        .map_err(|e| inner_error(0, e))?;
    let mut spectral = SpectralState::default();
    let mut monitors = Monitors {
        prefix: PrefixSums::new(cfg.epsilon),
        lower_bound: problem.lower_bound(),
        strict: cfg.strict_monitors,
        segment: None,
        summary: MonitorSummary::default(),
    };
    let mut prev_grad: Option<(Point, Point)> = None;
    let mut records = Vec::new();
    let mut k = 0;

    let status = loop {
        let mut inner_extra = 0;
        if cfg.adaptive_lp {
            let grad = problem.smooth_gradient(&x)?;
            if let Some((xp, gp)) = &prev_grad {
                if let Ok(lp) = estimate_lp(xp, &x, gp, &grad, p) {
                    let lp = lp.clamp(LP_CLAMP.0, LP_CLAMP.1);
                    let g_new = 0.99 / lp;
                    let s_new = 0.99 * (1.0 - g_new * lp) / (p * g_new);
                    if g_new != gamma || s_new != sigma {
                        gamma = g_new;
                        sigma = s_new;
                        monitors.segment = None;
                        sol = oracle
                            .solve(problem, &x, gamma, cfg.epsilon.at(k))
                            .map_err(|e| inner_error(k, e))?;
                        inner_extra = sol.inner_iterations;
                    }
                }
            }
            prev_grad = Some((x.clone(), grad));
        }

        let mut record = SolverRecord {
            k,
            phi: problem.objective(&sol.y_bar)?.value(),
            envelope_inexact: sol.envelope_value,
            residual_norm: sol.residual_norm(),
            alpha: 0.0,
            backtracks: 0,
            epsilon_k: cfg.epsilon.at(k),
            gamma,
            sigma,
            wall_time_ms: 0.0,
            fallback: false,
            descent_ok: true,
            inner_iterations: inner_extra,
        };

        let stop = if record.residual_norm <= cfg.stop_residual_tol {
            Some(Status::Converged)
        } else {
            budget.status(k, started)
        };
        if let Some(status) = stop {
            record.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
            observer(&IterationView {
                k,
                x: &x,
                output: &sol.y_bar,
            });
            records.push(record);
            break status;
        }

        let d = if cfg.direction == Direction::Spectral && cfg.structural == Structural::C {
            spectral_direction(&mut spectral, &x, &sol.residual).1
        } else {
            Point::zeros(x.len())
        };
        let step = boosted_step(problem, oracle, k, &x, &sol, &d, cfg, gamma, sigma)?;

        record.alpha = step.alpha;
        record.backtracks = step.backtracks;
        record.fallback = step.fallback;
        record.descent_ok = step.acceptance_gap <= 0.0;
        record.inner_iterations += step.inner_iterations;
        record.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        observer(&IterationView {
            k,
            x: &x,
            output: &sol.y_bar,
        });

        let monitored = !cfg.adaptive_lp && !step.fallback && record.descent_ok;
        if monitored {
            monitors.check(
                k,
                sol.envelope_value,
                step.next_solution.envelope_value,
                record.residual_norm.powf(p),
                sigma,
                step.acceptance_gap,
            )?;
        } else {
            monitors.segment = None;
        }
        if step.fallback {
            monitors.summary.fallbacks += 1;
            spectral.reset();
        }
        records.push(record);

        x = step.x_next;
        sol = step.next_solution;
        k += 1;
    };

    Ok(SolverTrace {
        method: method.into(),
        records,
        status,
        monitors: monitors.summary,
        output: sol.y_bar,
        x_final: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hifbs::{GridInner, InnerSolverConfig, SubgradientInner};
    use crate::problem::{NonsmoothFn, SmoothFn, ZeroFunction};
    use ndarray::array;
    use std::sync::Arc;

    /// Exact splitting map for `f = ½x²`, `g = 0`, `p = 2`: `ȳ = (1 − γ)x`.
    struct ExactQuadratic;

    impl HifbsOracle for ExactQuadratic {
        fn solve(
            &self,
            problem: &CompositeProblem,
            x: &Point,
            gamma: f64,
            epsilon: f64,
        ) -> Result<HifbsSolution> {
            HifbsSolution::new(problem, x, x * (1.0 - gamma), gamma, epsilon, 0)
        }
    }

    fn quadratic() -> CompositeProblem {
        let f = SmoothFn::new(1, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone())
            .with_lower_bound(0.0);
        CompositeProblem::new(Arc::new(f), Arc::new(ZeroFunction), 2.0)
            .unwrap()
            .with_lp_estimate(1.0)
            .unwrap()
    }

    #[test]
    fn spectral_in_range() {
        let st = SpectralState::default();
        let w = st.omega(&array![1.0, 0.0], &array![2.0, 0.0], &array![1.0, 0.0]);
        assert_eq!(w, 0.5);
        let mut st = SpectralState::default();
        spectral_direction(&mut st, &array![0.0, 0.0], &array![0.0, 0.0]);
        let (w, d) = spectral_direction(&mut st, &array![1.0, 0.0], &array![2.0, 0.0]);
        // s = (1,0), y = (2,0)
        assert_eq!(w, 0.5);
        assert_eq!(d, array![-1.0, 0.0]);
    }

    #[test]
    fn spectral_fallback_branches() {
        let st = SpectralState::default();
        let s = array![1.0, 0.0];
        let y = array![1e-12, 0.0];
        assert_eq!(st.omega(&s, &y, &array![2.0, 0.0]), 1.0);
        assert!((st.omega(&s, &y, &array![0.01, 0.0]) - 100.0).abs() < 1e-12);
        assert_eq!(st.omega(&s, &y, &array![1e-7, 0.0]), 1e5);
        assert_eq!(st.omega(&s, &array![0.0, 1.0], &array![2.0, 0.0]), 1.0);
    }

    #[test]
    fn spectral_first_call_is_unit() {
        let mut st = SpectralState::default();
        let (w, d) = spectral_direction(&mut st, &array![3.0], &array![0.5]);
        assert_eq!(w, 1.0);
        assert_eq!(d, array![-0.5]);
    }

    #[test]
    fn structural_examples() {
        let x = array![1.0, 2.0];
        let y = array![0.5, -1.0];
        let d = array![3.0, 0.0];
        let near = structural_iterate(Structural::C, 1e-12, &x, &y, &d);
        assert!(norm(&(&near - &y)) < 1e-9);
        assert_eq!(structural_iterate(Structural::C, 1.0, &x, &y, &d), &x + &d);
        assert_eq!(structural_iterate(Structural::A, 0.3, &x, &y, &d), y);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::boosted(0.5, 0.6)
            .validate(2.0, Some(1.0))
            .is_err());
        assert!(SolverConfig::boosted(0.5, 0.4)
            .validate(2.0, Some(1.0))
            .is_ok());
        assert!(SolverConfig::boosted(0.5, 0.2)
            .validate(2.0, Some(1.0))
            .is_ok());
        assert!(SolverConfig::boosted(1.0, 0.1)
            .validate(2.0, Some(1.0))
            .is_err());
        assert!(SolverConfig::boosted(0.5, 0.2).validate(2.0, None).is_err());
        assert!(SolverConfig::boosted(1.0, 1.0)
            .adaptive()
            .validate(2.0, None)
            .is_ok());
        let mut c = SolverConfig::boosted(0.5, 0.2);
        c.vartheta = 1.0;
        assert!(c.validate(2.0, Some(1.0)).is_err());
    }

    #[test]
    fn epsilon_schedule_values() {
        let e = EpsilonSchedule::default();
        assert_eq!((e.at(0), e.at(1), e.at(3)), (1.0, 0.25, 1.0 / 16.0));
        let mut p = PrefixSums::new(e);
        assert_eq!(p.get(0), 0.0);
        assert_eq!(p.get(2), 1.25);
        assert!(EpsilonSchedule::Geometric {
            scale: 1.0,
            rate: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn plain_hifba_halves_iterates() {
        let prob = quadratic();
        let mut cfg = SolverConfig::plain(0.5, 0.2);
        cfg.max_outer = 10;
        cfg.stop_residual_tol = 0.0;
        let mut xs = Vec::new();
        let trace = run_with_observer(&prob, &ExactQuadratic, &array![4.0], &cfg, &mut |v| {
            xs.push(v.x[0])
        })
        .unwrap();
        for (k, x) in xs.iter().enumerate() {
            assert_eq!(*x, 4.0 * 0.5f64.powi(k as i32));
        }
        for w in trace.records.windows(2) {
            assert_eq!(w[1].residual_norm, 0.5 * w[0].residual_norm);
        }
        assert_eq!(trace.status, Status::MaxOuter);
        assert_eq!(trace.iterations(), 10);
    }

    #[test]
    fn starts_at_optimum() {
        let prob = quadratic();
        let trace = run(
            &prob,
            &ExactQuadratic,
            &array![0.0],
            &SolverConfig::boosted(0.5, 0.2),
        )
        .unwrap();
        assert_eq!(trace.status, Status::Converged);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.last().residual_norm, 0.0);
    }

    #[test]
    fn fixed_point_step_is_accepted_immediately() {
        let prob = quadratic();
        let x = array![0.0];
        let cfg = SolverConfig::boosted(0.5, 0.2);
        let sol = ExactQuadratic.solve(&prob, &x, 0.5, 1.0).unwrap();
        let step = boosted_step(
            &prob,
            &ExactQuadratic,
            0,
            &x,
            &sol,
            &array![0.0],
            &cfg,
            0.5,
            0.2,
        )
        .unwrap();
        assert_eq!(step.backtracks, 0);
        assert!(step.acceptance_gap <= -1.25 + 1e-15);
    }

    #[test]
    fn exact_quadratic_envelope_descent() {
        let prob = quadratic();
        let gamma = 0.5;
        let mut cfg = SolverConfig::boosted(gamma, 0.2);
        cfg.epsilon = EpsilonSchedule::InverseSquare { scale: 1e-12 };
        for x0 in [-3.0, 0.7, 5.0] {
            let x = array![x0];
            let sol = ExactQuadratic.solve(&prob, &x, gamma, 1e-12).unwrap();
            assert!((sol.envelope_value - (1.0 - gamma) * x0 * x0 / 2.0).abs() < 1e-14);
            // With d = ȳ − x every candidate is ȳ itself.
            let d = &sol.y_bar - &x;
            let step =
                boosted_step(&prob, &ExactQuadratic, 0, &x, &sol, &d, &cfg, gamma, 0.2).unwrap();
            assert_eq!(step.backtracks, 0);
            assert_eq!(step.x_next, sol.y_bar);
            let expect = (1.0 - gamma).powi(3) * x0 * x0 / 2.0;
            assert!((step.next_solution.envelope_value - expect).abs() < 1e-14);
            assert!(step.acceptance_gap < 0.0);
        }
    }

    #[test]
    fn gap_instance_converges_with_grid_inner() {
        let f = SmoothFn::new(1, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone());
        let g = NonsmoothFn::new(|x: &Point| x.dot(x), |x: &Point| x * 2.0).with_lower_bound(0.0);
        let prob = CompositeProblem::new(Arc::new(f), Arc::new(g), 3.0)
            .unwrap()
            .with_lp_estimate(1e-3)
            .unwrap()
            .with_lower_bound(0.0);
        let mut cfg = SolverConfig::boosted(2.0, 0.1);
        cfg.max_outer = 50;
        cfg.stop_residual_tol = 1e-4;
        let inner = GridInner {
            half_width: 2.0,
            resolution: 40001,
        };
        let trace = run(&prob, &inner, &array![1.0], &cfg).unwrap();
        assert_eq!(trace.status, Status::Converged, "{:?}", trace.last());
        assert!(trace.last().residual_norm < 1e-4);
    }

    #[test]
    fn monitors_hold_with_subgradient_inner() {
        let f = SmoothFn::new(2, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone())
            .with_lower_bound(0.0);
        let g = NonsmoothFn::new(
            |x: &Point| x.mapv(f64::abs).sum(),
            |x: &Point| x.mapv(f64::signum),
        )
        .with_lower_bound(0.0);
        let prob = CompositeProblem::new(Arc::new(f), Arc::new(g), 2.0)
            .unwrap()
            .with_lp_estimate(1.0)
            .unwrap();
        let mut cfg = SolverConfig::boosted(0.5, 0.2);
        cfg.max_outer = 100;
        let inner = SubgradientInner::new(InnerSolverConfig::with_beta0(0.8));
        let trace = run(&prob, &inner, &array![3.0, -2.0], &cfg).unwrap();
        assert!(trace.monitors.checked_steps > 0);
        assert!(trace.monitors.acceptance_worst <= 0.0);
        assert!(trace.monitors.lyapunov_worst <= 1e-10);
        assert!(trace.monitors.summability_worst <= 0.0);
    }

    #[test]
    fn fallback_is_flagged() {
        // An oracle whose envelope never decreases forces the fallback.
        struct Stubborn;
        impl HifbsOracle for Stubborn {
            fn solve(
                &self,
                problem: &CompositeProblem,
                x: &Point,
                gamma: f64,
                epsilon: f64,
            ) -> Result<HifbsSolution> {
                let mut s = HifbsSolution::new(problem, x, x * 0.5, gamma, epsilon, 0)?;
                s.envelope_value = 100.0;
                Ok(s)
            }
        }
        let prob = quadratic();
        let mut cfg = SolverConfig::boosted(0.5, 0.2);
        cfg.max_backtracks = 3;
        cfg.max_outer = 1;
        cfg.epsilon = EpsilonSchedule::InverseSquare { scale: 1e-6 };
        let trace = run(&prob, &Stubborn, &array![10.0], &cfg).unwrap();
        assert!(trace.records[0].fallback);
        assert_eq!(trace.monitors.fallbacks, 1);
        assert_eq!(trace.monitors.checked_steps, 0);
    }

    #[test]
    fn strict_monitor_reports_violation() {
        let mut m = Monitors {
            prefix: PrefixSums::new(EpsilonSchedule::default()),
            lower_bound: Some(0.0),
            strict: true,
            segment: None,
            summary: MonitorSummary::default(),
        };
        let err = m.check(0, 1.0, 0.5, 1.0, 1.0, 1e-3).unwrap_err();
        assert!(matches!(
            err,
            Error::InvariantViolated {
                name: "acceptance inequality",
                ..
            }
        ));
    }

    #[test]
    fn time_budget_stops_run() {
        let prob = quadratic();
        let mut cfg = SolverConfig::plain(0.5, 0.2);
        cfg.stop_residual_tol = 0.0;
        cfg.max_outer = usize::MAX;
        cfg.time_budget = Some(Duration::ZERO);
        let trace = run(&prob, &ExactQuadratic, &array![1.0], &cfg).unwrap();
        assert_eq!(trace.status, Status::Budget);
    }

    #[test]
    fn adaptive_mode_updates_gamma() {
        let f =
            SmoothFn::new(1, |x: &Point| 2.0 * x.dot(x), |x: &Point| x * 4.0).with_lower_bound(0.0);
        let prob = CompositeProblem::new(Arc::new(f), Arc::new(ZeroFunction), 2.0).unwrap();
        let mut cfg = SolverConfig::boosted(1.0, 1.0).adaptive();
        cfg.max_outer = 5;
        cfg.stop_residual_tol = 0.0;
        let inner = GridInner {
            half_width: 3.0,
            resolution: 6001,
        };
        let trace = run(&prob, &inner, &array![1.0], &cfg).unwrap();
        let later = &trace.records[2];
        // L_p of 2x² is 4.
        assert!((later.gamma - 0.99 / 4.0).abs() < 1e-9, "{}", later.gamma);
        assert_eq!(trace.records[0].gamma, 1.0);
    }
}
