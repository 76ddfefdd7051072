//! Built-in property suites: majorants, paraconcavity, the envelope sandwich,
//! and the gap between the splitting map and a shifted proximal point.

use std::sync::Arc;

use hifba::hifbs::{solve_hifbs_grid, solve_hope_grid, Interval};
use hifba::majorant::{
    check_majorant, check_paraconcavity, BoxSampler, MajorantReport, DEFAULT_TOLERANCE,
};
use hifba::problems::ClippedPenalty;
use hifba::{
    CompositeProblem, NonsmoothFn, NonsmoothOracle, Point, SmoothFn, SmoothOracle, ZeroFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

fn scalar_smooth(
    value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    slope: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Arc<dyn SmoothOracle> {
    Arc::new(SmoothFn::new(
        1,
        move |x: &Point| value(x[0]),
        move |x: &Point| Point::from_elem(1, slope(x[0])),
    ))
}

fn scalar_nonsmooth(
    value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    slope: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Arc<dyn NonsmoothOracle> {
    Arc::new(NonsmoothFn::new(
        move |x: &Point| value(x[0]),
        move |x: &Point| Point::from_elem(1, slope(x[0])),
    ))
}

pub fn half_square() -> Arc<dyn SmoothOracle> {
    scalar_smooth(|x| 0.5 * x * x, |x| x)
}

pub fn neg_square() -> Arc<dyn SmoothOracle> {
    scalar_smooth(|x| -x * x, |x| -2.0 * x)
}

pub fn quartic() -> Arc<dyn SmoothOracle> {
    scalar_smooth(|x| x.powi(4), |x| 4.0 * x.powi(3))
}

pub fn square() -> Arc<dyn SmoothOracle> {
    scalar_smooth(|x| x * x, |x| 2.0 * x)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckCase {
    pub name: String,
    pub p: f64,
    /// `L_p` for majorant checks, `c` for paraconcavity checks.
    pub constant: f64,
    pub expect_hold: bool,
    pub report: MajorantReport,
    pub passed: bool,
}

fn case(name: &str, p: f64, constant: f64, expect_hold: bool, report: MajorantReport) -> CheckCase {
    CheckCase {
        name: name.to_string(),
        p,
        constant,
        expect_hold,
        passed: report.holds == expect_hold,
        report,
    }
}

/// `½x²` at `(2, 1)`, `−x²` on a `p × L_p` grid, `x⁴` expected to fail, and an optional user `L_p` for `½x²`.
pub fn majorant_suite(samples: usize, faulty_lp: Option<f64>) -> Result<Vec<CheckCase>> {
    let mut out = Vec::new();
    let sampler = || BoxSampler::new(-5.0, 5.0, 7);
    let r = check_majorant(
        half_square().as_ref(),
        2.0,
        1.0,
        &mut sampler(),
        samples,
        1e-12,
    )?;
    out.push(case("half_square", 2.0, 1.0, true, r));
    for p in [1.5, 2.0, 3.0] {
        for lp in [1e-6, 1.0] {
            let r = check_majorant(
                neg_square().as_ref(),
                p,
                lp,
                &mut sampler(),
                samples,
                DEFAULT_TOLERANCE,
            )?;
            out.push(case("neg_square", p, lp, true, r));
        }
    }
    let r = check_majorant(
        quartic().as_ref(),
        2.0,
        1.0,
        &mut sampler(),
        samples,
        DEFAULT_TOLERANCE,
    )?;
    out.push(case("quartic", 2.0, 1.0, false, r));
    if let Some(lp) = faulty_lp {
        let r = check_majorant(
            half_square().as_ref(),
            2.0,
            lp,
            &mut sampler(),
            samples,
            DEFAULT_TOLERANCE,
        )?;
        out.push(case("half_square_user_lp", 2.0, lp, true, r));
    }
    Ok(out)
}

pub fn paraconcavity_suite(samples: usize) -> Result<Vec<CheckCase>> {
    let mut s = BoxSampler::new(-5.0, 5.0, 11);
    let concave = check_paraconcavity(
        neg_square().as_ref(),
        2.0,
        1.0,
        &mut s,
        samples,
        DEFAULT_TOLERANCE,
    )?;
    let mut s = BoxSampler::new(-5.0, 5.0, 11);
    let convex = check_paraconcavity(
        square().as_ref(),
        2.0,
        0.1,
        &mut s,
        samples,
        DEFAULT_TOLERANCE,
    )?;
    Ok(vec![
        case("neg_square", 2.0, 1.0, true, concave),
        case("square", 2.0, 0.1, false, convex),
    ])
}

/// `f = ½x²`, `g = x²`, `p = 3`, `γ = 2`, `x = 1`: the minimizer of the model and
/// the proximal point of `g` at `x − γ∇f(x)` are different points.
#[derive(Debug, Clone, Serialize)]
pub struct SplittingGap {
    pub splitting_minimizer: f64,
    pub splitting_expected: f64,
    pub shifted_prox_minimizer: f64,
    pub shifted_prox_expected: f64,
    pub gap: f64,
    pub passed: bool,
}

pub const GAP_TOLERANCE: f64 = 1e-4;

pub fn splitting_gap(resolution: usize) -> Result<SplittingGap> {
    let (p, gamma, x) = (3.0, 2.0, 1.0);
    let g = scalar_nonsmooth(|y| y * y, |y| 2.0 * y);
    let problem = CompositeProblem::new(half_square(), g.clone(), p)?;
    let bounds = [Interval::new(-4.0, 6.0)];
    let sol = solve_hifbs_grid(
        &problem,
        &Point::from_elem(1, x),
        gamma,
        &bounds,
        resolution,
    )?;
    let z = Point::from_elem(1, x - gamma * x);
    let (prox, _) = solve_hope_grid(g.as_ref(), &z, gamma, p, &bounds, resolution)?;
    let splitting_expected = 3.0 - 10f64.sqrt();
    let shifted_prox_expected = -3.0 + 2.0 * 2f64.sqrt();
    let (a, b) = (sol.y_bar[0], prox[0]);
    Ok(SplittingGap {
        splitting_minimizer: a,
        splitting_expected,
        shifted_prox_minimizer: b,
        shifted_prox_expected,
        gap: (a - b).abs(),
        passed: (a - splitting_expected).abs() <= GAP_TOLERANCE
            && (b - shifted_prox_expected).abs() <= GAP_TOLERANCE
            && (a - b).abs() > 2.0 * GAP_TOLERANCE,
    })
}

/// A one-dimensional composite problem with a valid `γ < 1/L_p` and a larger `μ`.
pub struct EnvelopeProblem {
    pub name: &'static str,
    pub problem: CompositeProblem,
    pub gamma: f64,
    pub mu: f64,
}

pub fn envelope_problems() -> Result<Vec<EnvelopeProblem>> {
    let abs = || {
        scalar_nonsmooth(
            |x: f64| x.abs(),
            |x: f64| if x == 0.0 { 0.0 } else { x.signum() },
        )
    };
    let mk = |name, f, g, p: f64, lp: f64, gamma, mu| -> Result<EnvelopeProblem> {
        Ok(EnvelopeProblem {
            name,
            problem: CompositeProblem::new(f, g, p)?.with_lp_estimate(lp)?,
            gamma,
            mu,
        })
    };
    let log_smooth = scalar_smooth(|x| (1.0 + x * x).ln(), |x| 2.0 * x / (1.0 + x * x));
    let holder = scalar_smooth(
        |x| (x - 1.0).abs().powf(1.5) / 1.5,
        |x| (x - 1.0).signum() * (x - 1.0).abs().sqrt(),
    );
    let half_neg = scalar_smooth(|x| -0.5 * x * x, |x| -x);
    let quartic_g = scalar_nonsmooth(|x| x.powi(4) / 4.0, |x| x.powi(3));
    let interval = scalar_nonsmooth(
        |x| {
            if (1.0..=3.0).contains(&x) {
                0.0
            } else {
                f64::INFINITY
            }
        },
        |_| 0.0,
    );
    let half_abs = scalar_nonsmooth(
        |x: f64| 0.5 * x.abs(),
        |x: f64| if x == 0.0 { 0.0 } else { 0.5 * x.signum() },
    );
    Ok(vec![
        mk(
            "half_square",
            half_square(),
            Arc::new(ZeroFunction),
            2.0,
            1.0,
            0.5,
            0.9,
        )?,
        mk(
            "half_square_plus_abs",
            half_square(),
            abs(),
            2.0,
            1.0,
            0.5,
            0.9,
        )?,
        mk("log_plus_abs", log_smooth, half_abs, 2.0, 2.0, 0.3, 0.45)?,
        mk(
            "holder_clipped",
            holder,
            Arc::new(ClippedPenalty::new(0.5)),
            1.5,
            1.5,
            0.4,
            0.6,
        )?,
        mk(
            "concave_plus_quartic",
            half_neg,
            quartic_g,
            3.0,
            1e-6,
            1.0,
            2.0,
        )?,
        mk(
            "half_square_on_interval",
            half_square(),
            interval,
            2.0,
            1.0,
            0.5,
            0.9,
        )?,
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCase {
    pub name: String,
    pub samples: usize,
    /// Max of `F_γ(x) − φ(x)` over finite `φ(x)`.
    pub worst_upper: f64,
    /// Max of `φ(ȳ) − F_γ(x)`.
    pub worst_prox: f64,
    /// Max of `F_μ(x) − F_γ(x)`.
    pub worst_monotone: f64,
    /// `|min F_γ − min φ|` over the search window.
    pub min_gap: f64,
    pub passed: bool,
}

/// Rounding in the grid midpoint `x`.
pub const UPPER_SLACK: f64 = 1e-12;
pub const PROX_SLACK: f64 = 1e-6;
pub const MONOTONE_SLACK: f64 = 2e-6;
pub const MIN_SLACK: f64 = 1e-4;

const HALF_WIDTH: f64 = 3.0;
const RESOLUTION: usize = 60_001;

fn envelope_at(ep: &EnvelopeProblem, x: f64, gamma: f64) -> Result<(f64, f64)> {
    let sol = solve_hifbs_grid(
        &ep.problem,
        &Point::from_elem(1, x),
        gamma,
        &[Interval::centered(x, HALF_WIDTH)],
        RESOLUTION,
    )?;
    let phi_bar = ep.problem.objective(&sol.y_bar)?.value();
    Ok((sol.envelope_value, phi_bar))
}

/// Envelope sandwich on `samples` points of the `1e−4` lattice in `[−1.5, 1.5]`.
pub fn envelope_suite(samples: usize, seed: u64) -> Result<Vec<EnvelopeCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..samples)
        .map(|_| rng.random_range(-15_000i32..=15_000) as f64 * 1e-4)
        .collect();
    let coarse: Vec<f64> = (-30..=30).map(|i| i as f64 * 0.05).collect();
    let mut out = Vec::new();
    for ep in envelope_problems()? {
        let (mut worst_upper, mut worst_prox, mut worst_monotone) =
            (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &x in &xs {
            let (f_gamma, phi_bar) = envelope_at(&ep, x, ep.gamma)?;
            let (f_mu, _) = envelope_at(&ep, x, ep.mu)?;
            let phi_x = ep.problem.objective(&Point::from_elem(1, x))?.value();
            if phi_x.is_finite() {
                worst_upper = worst_upper.max(f_gamma - phi_x);
            }
            worst_prox = worst_prox.max(phi_bar - f_gamma);
            worst_monotone = worst_monotone.max(f_mu - f_gamma);
        }
        let mut min_env = f64::INFINITY;
        for &x in &coarse {
            min_env = min_env.min(envelope_at(&ep, x, ep.gamma)?.0);
        }
        let window = [Interval::new(-1.5 - HALF_WIDTH, 1.5 + HALF_WIDTH)];
        let g = ep.problem.nonsmooth().clone();
        let f = ep.problem.smooth().clone();
        let phi = move |y: &Point| f.value(y) + g.value(y);
        let min_phi = grid_min(&window[0], 90_001, &phi);
        let min_gap = (min_env - min_phi).abs();
        out.push(EnvelopeCase {
            name: ep.name.to_string(),
            samples,
            worst_upper,
            worst_prox,
            worst_monotone,
            min_gap,
            passed: worst_upper <= UPPER_SLACK
                && worst_prox <= PROX_SLACK
                && worst_monotone <= MONOTONE_SLACK
                && min_gap <= MIN_SLACK,
        });
    }
    Ok(out)
}

fn grid_min(iv: &Interval, n: usize, phi: &dyn Fn(&Point) -> f64) -> f64 {
    let mut y = Point::zeros(1);
    (0..n)
        .map(|i| {
            y[0] = iv.lower + (iv.upper - iv.lower) * i as f64 / (n - 1) as f64;
            phi(&y)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub majorant: Vec<CheckCase>,
    pub paraconcavity: Vec<CheckCase>,
    pub splitting_gap: SplittingGap,
    pub envelope: Vec<EnvelopeCase>,
}

pub const ENVELOPE_SAMPLES: usize = 100;

pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let samples = cfg.validate.samples;
    let majorant = majorant_suite(samples, cfg.validate.faulty_lp)?;
    let paraconcavity = paraconcavity_suite(samples)?;
    let splitting_gap = splitting_gap(200_001)?;
    let envelope = envelope_suite(ENVELOPE_SAMPLES, cfg.seeds.first().copied().unwrap_or(0))?;
    let passed = majorant.iter().all(|c| c.passed)
        && paraconcavity.iter().all(|c| c.passed)
        && splitting_gap.passed
        && envelope.iter().all(|c| c.passed);
    Ok(ValidationReport {
        passed,
        majorant,
        paraconcavity,
        splitting_gap,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majorant_cases_behave() {
        let cases = majorant_suite(500, None).unwrap();
        assert!(cases.iter().all(|c| c.passed), "{cases:#?}");
        assert!(cases[0].report.worst_violation <= 1e-12);
        let quartic = cases.iter().find(|c| c.name == "quartic").unwrap();
        assert!(!quartic.report.holds && quartic.report.worst_pair.is_some());
    }

    #[test]
    fn faulty_lp_fails() {
        let cases = majorant_suite(200, Some(0.5)).unwrap();
        let user = cases.last().unwrap();
        assert!(!user.passed);
        assert!(user.report.worst_violation > 0.0);
    }

    #[test]
    fn paraconcavity_cases_behave() {
        assert!(paraconcavity_suite(300).unwrap().iter().all(|c| c.passed));
    }

    #[test]
    fn minimizers_differ() {
        let r = splitting_gap(100_001).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.gap - 0.009295).abs() < 1e-3);
    }
}
