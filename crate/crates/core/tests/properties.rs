use std::sync::Arc;

use approx::assert_relative_eq;
use hifba::hifbs::{
    cubic_positive_root, solve_hifbs_sggdss, HifbsOracle, InnerSolverConfig, NmfClosedForm,
};
use hifba::majorant::{check_majorant, estimate_lp, BoxSampler, FixedPairs};
use hifba::problem::power_grad;
use hifba::problems::{
    clipped_penalty, gen_inverse, nmf_reformulate, snr_db, InverseParams, NmfState,
};
use hifba::solver::{spectral_direction, structural_iterate, SpectralState, Structural};
use hifba::{norm, CompositeProblem, NonsmoothFn, Point, SmoothFn, ZeroFunction};
use ndarray::Array2;
use proptest::prelude::*;

fn point(len: std::ops::Range<usize>, scale: f64) -> impl Strategy<Value = Point> {
    prop::collection::vec(-scale..scale, len).prop_map(Point::from)
}

fn point_n(n: usize, scale: f64) -> impl Strategy<Value = Point> {
    prop::collection::vec(-scale..scale, n).prop_map(Point::from)
}

fn neg_square(dim: usize) -> impl hifba::SmoothOracle {
    SmoothFn::new(dim, |x: &Point| -x.dot(x), |x: &Point| x * -2.0)
}

fn abs_problem(dim: usize) -> CompositeProblem {
    let f = SmoothFn::new(dim, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone());
    let g = NonsmoothFn::new(
        |x: &Point| x.iter().map(|v| v.abs()).sum(),
        |x: &Point| x.mapv(f64::signum),
    );
    CompositeProblem::new(Arc::new(f), Arc::new(g), 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn power_grad_pairs_to_norm_power(x in point(1..6, 10.0), p in 1.05f64..4.0) {
        let g = power_grad(p, &x).unwrap();
        let n = norm(&x);
        prop_assert!((g.dot(&x) - n.powf(p)).abs() <= 1e-12 * n.powf(p).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn power_grad_matches_finite_differences(x in point_n(3, 5.0), p in 1.1f64..3.5) {
        prop_assume!(norm(&x) >= 1e-3 && x.iter().all(|v| v.abs() > 1e-3));
        let g = power_grad(p, &x).unwrap();
        let h = 1e-6 * norm(&x).max(1.0);
        for i in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (norm(&up).powf(p) - norm(&down).powf(p)) / (2.0 * p * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "i={i} fd={fd} g={}", g[i]);
        }
    }

    #[test]
    fn model_at_base_point_is_objective(x in point_n(4, 3.0), gamma in 0.01f64..10.0) {
        let problem = abs_problem(4);
        let model = problem.model_value(&x, &x, gamma).unwrap().value();
        let phi = problem.objective(&x).unwrap().value();
        prop_assert_eq!(model, phi);
    }

    #[test]
    fn model_is_nonincreasing_in_gamma(
        x in point_n(3, 3.0),
        y in point_n(3, 3.0),
        g1 in 0.01f64..5.0,
        bump in 0.0f64..5.0,
    ) {
        prop_assume!(norm(&(&x - &y)) > 0.0);
        let problem = abs_problem(3);
        let small = problem.model_value(&x, &y, g1).unwrap().value();
        let large = problem.model_value(&x, &y, g1 + bump).unwrap().value();
        prop_assert!(large <= small);
    }

    #[test]
    fn concave_square_has_every_majorant(p in 1.01f64..5.0, lp in 1e-8f64..10.0, seed in 0u64..1000) {
        let f = neg_square(2);
        let mut sampler = BoxSampler::new(-5.0, 5.0, seed);
        let report = check_majorant(&f, p, lp, &mut sampler, 200, 1e-9).unwrap();
        prop_assert!(report.holds, "worst {}", report.worst_violation);
    }

    #[test]
    fn holder_gradient_majorant(nu in 0.1f64..1.0, seed in 0u64..1000) {
        // f = |x|^{1+ν}/(1+ν) in 1-D: its gradient is ν-Hölder with constant 2^{1−ν}.
        let f = SmoothFn::new(
            1,
            move |x: &Point| x[0].abs().powf(1.0 + nu) / (1.0 + nu),
            move |x: &Point| Point::from(vec![x[0].signum() * x[0].abs().powf(nu)]),
        );
        let mut sampler = BoxSampler::new(-5.0, 5.0, seed);
        let report = check_majorant(&f, 1.0 + nu, 2f64.powf(1.0 - nu), &mut sampler, 400, 1e-9).unwrap();
        prop_assert!(report.holds, "worst {}", report.worst_violation);
    }

    #[test]
    fn majorant_check_is_monotone_in_lp(lp in 0.01f64..3.0, extra in 0.0f64..3.0, seed in 0u64..1000) {
        let f = SmoothFn::new(1, |x: &Point| x[0].powi(4) / 4.0, |x: &Point| Point::from(vec![x[0].powi(3)]));
        let low = check_majorant(&f, 2.0, lp, &mut BoxSampler::new(-1.0, 1.0, seed), 100, 1e-9).unwrap();
        let high = check_majorant(&f, 2.0, lp + extra, &mut BoxSampler::new(-1.0, 1.0, seed), 100, 1e-9).unwrap();
        prop_assert!(high.worst_violation <= low.worst_violation);
        if low.holds {
            prop_assert!(high.holds);
        }
    }

    #[test]
    fn estimate_lp_scales_with_gradient_difference(
        xp in point_n(3, 2.0),
        xc in point_n(3, 2.0),
        gp in point_n(3, 2.0),
        gc in point_n(3, 2.0),
        p in 1.1f64..3.0,
    ) {
        prop_assume!(norm(&(&xc - &xp)) > 1e-6);
        let base = estimate_lp(&xp, &xc, &gp, &gc, p).unwrap();
        let doubled = estimate_lp(&xp, &xc, &(&gp * 2.0), &(&gc * 2.0), p).unwrap();
        prop_assert!((doubled - 2.0 * base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn cubic_root_brackets_zero(a3 in 0.0f64..1e6, a1 in 1e-6f64..1e6, a0 in 1e-6f64..1e6) {
        let r = cubic_positive_root(a3, a1, a0).unwrap();
        let lhs = |t: f64| a3 * t * t * t + a1 * t - a0;
        prop_assert!(r >= 0.0);
        prop_assert!(lhs(r - 1e-6) < 0.0 || r < 1e-6);
        prop_assert!(lhs(r + 1e-6) > 0.0);
    }

    #[test]
    fn splitting_residual_is_exact(x in point_n(3, 3.0), gamma in 0.05f64..2.0) {
        let problem = abs_problem(3);
        let sol = solve_hifbs_sggdss(&problem, &x, gamma, &InnerSolverConfig::default()).unwrap();
        prop_assert_eq!(&sol.residual, &(&x - &sol.y_bar));
        let model = problem.model_value(&x, &sol.y_bar, gamma).unwrap().value();
        prop_assert_eq!(sol.envelope_value, model);
        // The start point y = x is visited, so the best iterate is no worse.
        prop_assert!(sol.envelope_value <= problem.objective(&x).unwrap().value());
    }

    #[test]
    fn structural_step_is_bounded(
        x in point_n(4, 5.0),
        y in point_n(4, 5.0),
        d in point_n(4, 5.0),
        alpha in 1e-9f64..=1.0,
    ) {
        let next = structural_iterate(Structural::C, alpha, &x, &y, &d);
        let lhs = norm(&(&next - &x));
        let rhs = norm(&(&x - &y)) + norm(&d);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn spectral_scaling_stays_in_range(
        steps in prop::collection::vec((point_n(3, 10.0), point_n(3, 1e-2)), 2..8),
    ) {
        let mut state = SpectralState::default();
        for (x, r) in &steps {
            let (omega, d) = spectral_direction(&mut state, x, r);
            prop_assert!((1e-1..=1e10).contains(&omega), "omega {omega}");
            prop_assert_eq!(d, r * -omega);
        }
    }

    #[test]
    fn clipped_penalty_is_bounded(x in point(1..20, 4.0), lambda in 0.0f64..5.0) {
        let (value, _) = clipped_penalty(&x, lambda);
        prop_assert!(value >= 0.0);
        prop_assert!(value <= lambda * x.len() as f64 + 1e-12);
    }

    #[test]
    fn snr_ignores_orthogonal_transforms(
        xt in point_n(2, 5.0),
        xh in point_n(2, 5.0),
        theta in 0.0f64..std::f64::consts::TAU,
        flip in any::<bool>(),
    ) {
        prop_assume!(norm(&(&xt - &xh)) > 1e-6 && norm(&xt) > 1e-6);
        let (c, s) = (theta.cos(), theta.sin());
        let q = if flip {
            Array2::from_shape_vec((2, 2), vec![c, s, s, -c]).unwrap()
        } else {
            Array2::from_shape_vec((2, 2), vec![c, -s, s, c]).unwrap()
        };
        let before = snr_db(&xt, &xh);
        let after = snr_db(&q.dot(&xt), &q.dot(&xh));
        prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn nmf_reformulation_is_exact(seed in 0u64..500, lambda in 0.0f64..1.0) {
        let state = NmfState::synthetic(4, 3, 2, lambda, 1.0, seed).unwrap();
        let problem = nmf_reformulate(&state).unwrap();
        let mut sampler = BoxSampler::new(0.0, 2.0, seed);
        for _ in 0..20 {
            let (pt, _) = hifba::majorant::PairSampler::next_pair(&mut sampler, problem.dim());
            let pt = pt.mapv(f64::abs);
            let (u, v) = state.split(&pt).unwrap();
            let direct = state.objective_at(&u, &v);
            let split = problem.objective(&pt).unwrap().value();
            prop_assert!((direct - split).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn gen_inverse_is_reproducible() {
    let params = InverseParams {
        m: 30,
        n: 60,
        q: 1.5,
        ..Default::default()
    };
    let a = gen_inverse(&params, 11).unwrap();
    let b = gen_inverse(&params, 11).unwrap();
    assert_eq!(a.snapshot(), b.snapshot());
    let c = gen_inverse(&params, 12).unwrap();
    assert_ne!(a.snapshot(), c.snapshot());
}

#[test]
fn reformulated_smooth_part_has_tiny_majorant() {
    let state = NmfState::synthetic(5, 4, 2, 0.1, 1.0, 3).unwrap();
    let problem = nmf_reformulate(&state).unwrap();
    for lp in [1e-8, 1e-4, 1.0] {
        let mut sampler = BoxSampler::new(0.0, 3.0, 9);
        let report =
            check_majorant(problem.smooth().as_ref(), 2.0, lp, &mut sampler, 500, 1e-9).unwrap();
        assert!(report.holds, "L_p = {lp}: worst {}", report.worst_violation);
    }
}

#[test]
fn quartic_witness_is_reported() {
    let f = SmoothFn::new(
        1,
        |x: &Point| x[0].powi(4),
        |x: &Point| Point::from(vec![4.0 * x[0].powi(3)]),
    );
    let mut pairs = FixedPairs::new(vec![(Point::from(vec![0.0]), Point::from(vec![10.0]))]);
    let report = check_majorant(&f, 2.0, 1.0, &mut pairs, 1, 1e-9).unwrap();
    assert!(!report.holds);
    assert_relative_eq!(report.worst_violation, 1e4 - 50.0, max_relative = 1e-12);
}

#[test]
fn closed_form_oracle_reports_model_value() {
    let state = NmfState::synthetic(6, 5, 2, 0.05, 1.0, 4).unwrap();
    let problem = nmf_reformulate(&state).unwrap();
    let x = state.current_point();
    let sol = NmfClosedForm::new(&state)
        .solve(&problem, &x, 3.0, 0.1)
        .unwrap();
    assert!(sol.y_bar.iter().all(|v| *v >= 0.0));
    assert_eq!(sol.residual, &x - &sol.y_bar);
    let model = problem.model_value(&x, &sol.y_bar, 3.0).unwrap().value();
    assert_relative_eq!(sol.envelope_value, model, max_relative = 1e-12);
    assert!(sol.envelope_value <= problem.objective(&x).unwrap().value() + 1e-12);
}

#[test]
fn zero_nonsmooth_part_gives_gradient_step() {
    let f = SmoothFn::new(2, |x: &Point| 0.5 * x.dot(x), |x: &Point| x.clone());
    let problem = CompositeProblem::new(Arc::new(f), Arc::new(ZeroFunction), 2.0).unwrap();
    let x = Point::from(vec![4.0, -2.0]);
    let gamma = 0.5;
    let lin = problem.linearize(&x).unwrap();
    let expected = &x * (1.0 - gamma);
    let m_exp = lin.model(&expected, gamma).unwrap().value();
    for dy in [-1e-3, 1e-3] {
        let mut y = expected.clone();
        y[0] += dy;
        assert!(lin.model(&y, gamma).unwrap().value() > m_exp);
    }
}
