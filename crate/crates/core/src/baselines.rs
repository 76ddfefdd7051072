//! Comparison methods sharing the [`SolverTrace`] schema.
//!
//! Subgradient runs report best-so-far `φ` in `envelope_inexact`, the
//! subgradient norm in `residual_norm` and the step length in `alpha`.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hifbs::bregman_step_nmf;
use crate::problem::{norm, CompositeProblem, Point};
use crate::problems::nmf::NmfState;
use crate::solver::{Budget, IterationView, MonitorSummary, SolverRecord, SolverTrace, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    SgCss,
    SgGdss,
    Bpg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    /// Constant step of SG-CSS.
    pub alpha: f64,
    /// Decay base of SG-GDSS.
    pub beta0: f64,
    /// Bregman step of BPG.
    pub gamma: f64,
    /// SG-GDSS stops once its step length drops below this.
    pub min_step: f64,
    pub budget: Budget,
}

impl BaselineConfig {
    pub fn sg_css(alpha: f64, budget: Budget) -> Self {
        BaselineConfig {
            kind: BaselineKind::SgCss,
            alpha,
            beta0: 0.9,
            gamma: 1.0,
            min_step: 0.0,
            budget,
        }
    }

    pub fn sg_gdss(beta0: f64, budget: Budget) -> Self {
        BaselineConfig {
            kind: BaselineKind::SgGdss,
            beta0,
            ..BaselineConfig::sg_css(1.0, budget)
        }
    }

    pub fn bpg(gamma: f64, budget: Budget) -> Self {
        BaselineConfig {
            kind: BaselineKind::Bpg,
            gamma,
            ..BaselineConfig::sg_css(1.0, budget)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            BaselineKind::SgCss => self.alpha > 0.0 && self.alpha.is_finite(),
            BaselineKind::SgGdss => self.beta0 > 0.0 && self.beta0 < 1.0,
            BaselineKind::Bpg => self.gamma > 0.0 && self.gamma.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "invalid step parameter for {:?}",
                self.kind
            )));
        }
        if self.budget.max_iters.is_none() && self.budget.max_time.is_none() {
            return Err(Error::InvalidParameter(
                "baselines need an iteration or time budget".into(),
            ));
        }
        Ok(())
    }

    pub fn method_name(&self) -> String {
        match self.kind {
            BaselineKind::SgCss => format!("sg_css_{}", self.alpha),
            BaselineKind::SgGdss => "sg_gdss".into(),
            BaselineKind::Bpg => "bpg".into(),
        }
    }
}

fn empty_record(k: usize) -> SolverRecord {
    SolverRecord {
        k,
        phi: 0.0,
        envelope_inexact: 0.0,
        residual_norm: 0.0,
        alpha: 0.0,
        backtracks: 0,
        epsilon_k: 0.0,
        gamma: 0.0,
        sigma: 0.0,
        wall_time_ms: 0.0,
        fallback: false,
        descent_ok: true,
        inner_iterations: 0,
    }
}

fn subgradient_method(
    problem: &CompositeProblem,
    x0: &Point,
    cfg: &BaselineConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SolverTrace> {
    cfg.validate()?;
    crate::error::check_dim(problem.dim(), x0.len())?;
    let started = Instant::now();
    let mut x = x0.clone();
    let mut best = x.clone();
    let mut best_phi = f64::INFINITY;
    let mut records = Vec::new();
    let mut k = 0;

    let status = loop {
        let phi = problem.objective(&x)?.value();
        if phi < best_phi || k == 0 {
            best_phi = phi;
            best.assign(&x);
        }
        let zeta = &problem.smooth_gradient(&x)? + &problem.nonsmooth_subgradient(&x)?;
        let zn = norm(&zeta);
        let step = match cfg.kind {
            BaselineKind::SgGdss => cfg.beta0.powi(k as i32 + 1),
            _ => cfg.alpha,
        };
        let mut rec = empty_record(k);
        rec.phi = phi;
        rec.envelope_inexact = best_phi;
        rec.residual_norm = zn;

        let stop = if zn == 0.0 || (cfg.kind == BaselineKind::SgGdss && step < cfg.min_step) {
            Some(Status::Converged)
        } else {
            cfg.budget.status(k, started)
        };
        rec.alpha = if stop.is_some() { 0.0 } else { step };
        rec.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        observer(&IterationView {
            k,
            x: &x,
            output: &x,
        });
        records.push(rec);
        if let Some(s) = stop {
            break s;
        }
        x.scaled_add(-step / zn, &zeta);
        k += 1;
    };

    Ok(SolverTrace {
        method: cfg.method_name(),
        records,
        status,
        monitors: MonitorSummary::default(),
        x_final: x,
        output: best,
    })
}

/// `x_{k+1} = x_k − α·ζ_k/‖ζ_k‖` with `ζ_k ∈ ∇f(x_k) + ∂g(x_k)`.
pub fn sg_css(
    problem: &CompositeProblem,
    x0: &Point,
    alpha: f64,
    budget: Budget,
) -> Result<SolverTrace> {
    subgradient_method(
        problem,
        x0,
        &BaselineConfig::sg_css(alpha, budget),
        &mut |_| {},
    )
}

/// Normalized subgradient steps of length `β^{k+1}` on `φ`.
pub fn sg_gdss_phi(
    problem: &CompositeProblem,
    x0: &Point,
    beta0: f64,
    budget: Budget,
) -> Result<SolverTrace> {
    subgradient_method(
        problem,
        x0,
        &BaselineConfig::sg_gdss(beta0, budget),
        &mut |_| {},
    )
}

/// Either subgradient baseline, with a per-iteration observer.
pub fn run_subgradient(
    problem: &CompositeProblem,
    x0: &Point,
    cfg: &BaselineConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SolverTrace> {
    if cfg.kind == BaselineKind::Bpg {
        return Err(Error::InvalidParameter("BPG runs through bpg_nmf".into()));
    }
    subgradient_method(problem, x0, cfg, observer)
}

/// Relative descent tolerance for the BPG monotonicity check.
pub const BPG_MONOTONE_TOLERANCE: f64 = 1e-9;

/// Bregman proximal gradient on regularized NMF from the state's factors.
///
/// With the kernel condition the data term is 1-smooth relative to `h`, so
/// `γ ≤ 1` gives monotone descent; `strict` rejects `γ > 1` and turns an
/// objective increase beyond [`BPG_MONOTONE_TOLERANCE`] into an error.
pub fn bpg_nmf(state: &NmfState, gamma: f64, budget: Budget, strict: bool) -> Result<SolverTrace> {
    let cfg = BaselineConfig::bpg(gamma, budget);
    cfg.validate()?;
    if strict {
        if gamma > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "BPG step gamma = {gamma} exceeds 1"
            )));
        }
        state.validate_kernel()?;
    }
    let started = Instant::now();
    let (mut u, mut v) = (state.u.clone(), state.v.clone());
    let mut phi = state.objective_at(&u, &v);
    let mut best = phi;
    let mut records = Vec::new();
    let mut monitors = MonitorSummary::default();
    let mut k = 0;

    let status = loop {
        let mut rec = empty_record(k);
        rec.phi = phi;
        rec.envelope_inexact = best;
        rec.gamma = gamma;
        let stop = cfg.budget.status(k, started);
        if let Some(s) = stop {
            rec.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
            records.push(rec);
            break s;
        }
        let (un, vn) = bregman_step_nmf(state, &u, &v, gamma)?;
        let moved = ((&un - &u).mapv(|e| e * e).sum() + (&vn - &v).mapv(|e| e * e).sum()).sqrt();
        let next_phi = state.objective_at(&un, &vn);
        let increase = next_phi - phi;
        monitors.acceptance_worst = monitors.acceptance_worst.max(increase);
        monitors.checked_steps += 1;
        rec.descent_ok = increase <= BPG_MONOTONE_TOLERANCE * phi.abs().max(1.0);
        if strict && !rec.descent_ok {
            return Err(Error::InvariantViolated {
                name: "BPG monotone descent",
                violation: increase,
                iteration: k,
            });
        }
        rec.residual_norm = moved;
        rec.alpha = 1.0;
        rec.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        records.push(rec);
        u = un;
        v = vn;
        phi = next_phi;
        best = best.min(phi);
        k += 1;
        if moved == 0.0 {
            let mut last = empty_record(k);
            last.phi = phi;
            last.envelope_inexact = best;
            last.gamma = gamma;
            last.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
            records.push(last);
            break Status::Converged;
        }
    };

    let point = NmfState::flatten(&u, &v);
    Ok(SolverTrace {
        method: cfg.method_name(),
        records,
        status,
        monitors,
        x_final: point.clone(),
        output: point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{NonsmoothFn, SmoothFn, ZeroFunction};
    use ndarray::{array, Array2};
    use std::sync::Arc;

    fn quadratic() -> CompositeProblem {
        let f = SmoothFn::new(1, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone());
        CompositeProblem::new(Arc::new(f), Arc::new(ZeroFunction), 2.0).unwrap()
    }

    #[test]
    fn css_unit_steps() {
        let trace = sg_css(&quadratic(), &array![10.0], 1.0, Budget::iterations(10)).unwrap();
        let xs: Vec<f64> = trace.records.iter().map(|r| (2.0 * r.phi).sqrt()).collect();
        assert_eq!(xs[..3], [10.0, 9.0, 8.0]);
        assert!(trace.last().envelope_inexact <= 0.5);
        assert_eq!(trace.output, array![0.0]);
    }

    #[test]
    fn css_stops_at_stationary_point() {
        let trace = sg_css(&quadratic(), &array![0.0], 0.1, Budget::iterations(10)).unwrap();
        assert_eq!(trace.status, Status::Converged);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn gdss_step_lengths() {
        let trace = sg_gdss_phi(&quadratic(), &array![10.0], 0.5, Budget::iterations(3)).unwrap();
        let steps: Vec<f64> = trace.records.iter().map(|r| r.alpha).collect();
        assert_eq!(steps, [0.5, 0.25, 0.125, 0.0]);
        let zero = sg_gdss_phi(&quadratic(), &array![0.0], 0.5, Budget::iterations(3)).unwrap();
        assert_eq!(zero.status, Status::Converged);
    }

    #[test]
    fn gdss_contracts_power_function() {
        let f = SmoothFn::new(
            1,
            |x: &Point| x[0].abs().powf(1.5),
            |x: &Point| array![1.5 * x[0].abs().sqrt() * x[0].signum()],
        );
        let prob = CompositeProblem::new(Arc::new(f), Arc::new(ZeroFunction), 1.5).unwrap();
        let trace = sg_gdss_phi(&prob, &array![1.0], 0.9, Budget::iterations(50)).unwrap();
        assert!(trace.x_final[0].abs() <= 0.2, "{}", trace.x_final[0]);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let f = SmoothFn::new(2, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone());
        let g = NonsmoothFn::new(
            |x: &Point| x.mapv(f64::abs).sum(),
            |x: &Point| x.mapv(f64::signum),
        );
        let prob = CompositeProblem::new(Arc::new(f), Arc::new(g), 2.0).unwrap();
        let trace = sg_css(&prob, &array![2.0, -3.0], 0.7, Budget::iterations(40)).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].envelope_inexact <= w[0].envelope_inexact);
        }
    }

    #[test]
    fn config_rejects_bad_steps() {
        assert!(BaselineConfig::sg_css(0.0, Budget::iterations(1))
            .validate()
            .is_err());
        assert!(BaselineConfig::sg_gdss(1.0, Budget::iterations(1))
            .validate()
            .is_err());
        assert!(BaselineConfig::sg_css(1.0, Budget::default())
            .validate()
            .is_err());
    }

    #[test]
    fn bpg_exact_factorization_is_fixed() {
        let u = array![[1.0, 0.0], [0.5, 2.0], [0.0, 1.0]];
        let v = array![[2.0, 1.0], [0.0, 3.0]];
        let x = u.dot(&v.t());
        let st = NmfState::new(x, 2, 0.0)
            .unwrap()
            .with_factors(u.clone(), v.clone())
            .unwrap();
        let trace = bpg_nmf(&st, 1.0, Budget::iterations(5), true).unwrap();
        assert!(trace.records.iter().all(|r| r.phi.abs() < 1e-20));
        let (uf, vf) = st.split(&trace.output).unwrap();
        assert!((&uf - &u).iter().all(|e| e.abs() < 1e-12));
        assert!((&vf - &v).iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn bpg_is_monotone_on_synthetic_data() {
        let st = NmfState::synthetic(50, 50, 5, 0.1, 1.0, 3).unwrap();
        let trace = bpg_nmf(&st, 1.0, Budget::iterations(100), true).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].phi <= w[0].phi + 1e-9 * w[0].phi.max(1.0));
        }
        assert!(trace.last().phi < trace.records[0].phi);
    }

    #[test]
    fn bpg_rejects_large_step() {
        let st = NmfState::new(Array2::ones((2, 2)), 1, 0.1).unwrap();
        assert!(bpg_nmf(&st, 1.5, Budget::iterations(2), true).is_err());
        assert!(bpg_nmf(&st, 1.5, Budget::iterations(2), false).is_ok());
    }
}
