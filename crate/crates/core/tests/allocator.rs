use mixmodel::allocator::{
    kkt_residual, maximize_response, solve_target_efficiency, ResponseCurve, SolverOptions, FLAG_TARGET_EXCEEDED,
    FLAG_TARGET_UNATTAINABLE,
};
use mixmodel::dataset::DepVarType;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn concave_pair() -> Vec<ResponseCurve> {
    vec![
        ResponseCurve::new("tv", 5_000.0, 1.4, 0.8, 2_000.0),
        ResponseCurve::new("search", 3_000.0, 1.1, 1.0, 900.0),
    ]
}

/// Best of `draws` uniform points on the feasible budget segment.
fn random_search(curves: &[ResponseCurve], lower: &[f64], upper: &[f64], budget: f64, draws: usize) -> f64 {
    let lo = lower[0].max(budget - upper[1]);
    let hi = upper[0].min(budget - lower[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..draws {
        let m0 = lo + rng.random::<f64>() * (hi - lo);
        let v = curves[0].response(m0) + curves[1].response(budget - m0);
        best = best.max(v);
    }
    best
}

#[test]
fn concave_two_channel_kkt_and_oracle() {
    let curves = concave_pair();
    let lower = [100.0, 100.0];
    let upper = [5_000.0, 5_000.0];
    let budget = 3_000.0;
    let sol = maximize_response(&curves, &lower, &upper, budget, &[1_500.0, 1_500.0], SolverOptions::default()).unwrap();

    let total: f64 = sol.spends.iter().sum();
    assert!((total - budget).abs() <= 1e-9 * budget);
    for i in 0..2 {
        assert!(sol.spends[i] > lower[i] && sol.spends[i] < upper[i], "optimum should be interior");
    }
    let (d0, d1) = (curves[0].marginal(sol.spends[0]), curves[1].marginal(sol.spends[1]));
    assert!((d0 - d1).abs() <= 1e-4 * d0.abs().max(d1.abs()), "marginals {d0} vs {d1}");
    assert!(sol.diagnostics.kkt_residual <= 1e-4);
    assert!(sol.diagnostics.converged);

    let oracle = random_search(&curves, &lower, &upper, budget, 1_000_000);
    assert!(sol.objective >= oracle * (1.0 - 1e-6), "solver {} oracle {oracle}", sol.objective);
}

#[test]
fn binding_bound_is_reported() {
    let curves = vec![
        ResponseCurve::new("strong", 10_000.0, 1.0, 1.0, 100.0),
        ResponseCurve::new("weak", 10.0, 1.0, 1.0, 100.0),
    ];
    let lower = [10.0, 10.0];
    let upper = [50.0, 500.0];
    let sol = maximize_response(&curves, &lower, &upper, 100.0, &[20.0, 80.0], SolverOptions::default()).unwrap();
    assert_eq!(sol.spends[0], 50.0);
    assert!((sol.spends[1] - 50.0).abs() < 1e-9);
    assert!(kkt_residual(&curves, &lower, &upper, &sol.spends) <= 1e-9);
}

#[test]
fn s_shaped_restarts_pick_best() {
    let curves = vec![
        ResponseCurve::new("a", 1_000.0, 1.0, 3.0, 400.0),
        ResponseCurve::new("b", 1_000.0, 1.0, 3.0, 400.0),
        ResponseCurve::new("c", 200.0, 1.0, 0.7, 50.0),
    ];
    let lower = [0.0; 3];
    let upper = [1_000.0; 3];
    let sol = maximize_response(&curves, &lower, &upper, 600.0, &[200.0; 3], SolverOptions::default()).unwrap();
    let best_restart = sol.diagnostics.restart_objectives[sol.diagnostics.best_restart];
    assert!(sol.diagnostics.restart_objectives.iter().all(|v| *v <= best_restart));
    let total: f64 = sol.spends.iter().sum();
    assert!((total - 600.0).abs() <= 1e-9 * 600.0);
}

#[test]
fn deterministic_across_runs() {
    let curves = concave_pair();
    let run = || maximize_response(&curves, &[0.0, 0.0], &[4_000.0, 4_000.0], 2_500.0, &[1_000.0, 1_500.0], SolverOptions::default()).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn target_roas_matches_closed_form() {
    // r(m) = beta * a m / (a m + c), so r(m) / m = target gives
    // m = (beta a / target - c) / a.
    let (beta, a, c) = (8_000.0, 1.3, 1_200.0);
    let curves = vec![ResponseCurve::new("tv", beta, a, 1.0, c)];
    let target = 2.0;
    let expected = (beta * a / target - c) / a;
    let hist = [1_000.0];
    let out = solve_target_efficiency(&curves, &[1.0], &[20_000.0], &hist, DepVarType::Revenue, target, SolverOptions::default()).unwrap();
    assert_eq!(out.flag, None);
    assert!((out.budget - expected).abs() <= 0.005 * expected, "bisection {} closed form {expected}", out.budget);
    assert!((out.efficiency - target).abs() <= 0.005 * target);
}

#[test]
fn target_cpa_direction_flips() {
    let (beta, a, c) = (500.0, 1.0, 300.0);
    let curves = vec![ResponseCurve::new("search", beta, a, 1.0, c)];
    // CPA = m / r(m) = (a m + c) / (beta a); solve for CPA = target.
    let target = 1.5;
    let expected = (target * beta * a - c) / a;
    let out = solve_target_efficiency(&curves, &[1.0], &[5_000.0], &[200.0], DepVarType::Conversion, target, SolverOptions::default()).unwrap();
    assert_eq!(out.flag, None);
    assert!((out.budget - expected).abs() <= 0.005 * expected);
    assert!(out.efficiency <= target * 1.005);
}

#[test]
fn target_boundaries_are_flagged() {
    let curves = vec![ResponseCurve::new("tv", 8_000.0, 1.0, 1.0, 1_000.0)];
    let easy = solve_target_efficiency(&curves, &[10.0], &[50_000.0], &[1_000.0], DepVarType::Revenue, 0.1, SolverOptions::default()).unwrap();
    assert_eq!(easy.flag, Some(FLAG_TARGET_EXCEEDED));
    assert!((easy.budget - 10_000.0).abs() < 1e-6);
    let hard = solve_target_efficiency(&curves, &[10.0], &[50_000.0], &[1_000.0], DepVarType::Revenue, 100.0, SolverOptions::default()).unwrap();
    assert_eq!(hard.flag, Some(FLAG_TARGET_UNATTAINABLE));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_and_bounds_hold(
        betas in prop::collection::vec(10.0f64..1e4, 3),
        alphas in prop::collection::vec(0.5f64..3.0, 3),
        hist in prop::collection::vec(10.0f64..1e3, 3),
        frac in 0.0f64..1.0,
    ) {
        let curves: Vec<ResponseCurve> = (0..3)
            .map(|i| ResponseCurve::new(format!("c{i}"), betas[i], 1.0, alphas[i], hist[i]))
            .collect();
        let lower: Vec<f64> = hist.iter().map(|h| 0.7 * h).collect();
        let upper: Vec<f64> = hist.iter().map(|h| 1.5 * h).collect();
        let (lo, hi): (f64, f64) = (lower.iter().sum(), upper.iter().sum());
        let budget = lo + frac * (hi - lo);
        let opts = SolverOptions { restarts: 4, ..Default::default() };
        let sol = maximize_response(&curves, &lower, &upper, budget, &hist, opts).unwrap();
        for i in 0..3 {
            prop_assert!(sol.spends[i] >= lower[i] && sol.spends[i] <= upper[i]);
        }
        let total: f64 = sol.spends.iter().sum();
        prop_assert!((total - budget).abs() <= 1e-9 * budget);
    }

    #[test]
    fn higher_roas_target_never_raises_budget(t1 in 0.5f64..6.0, t2 in 0.5f64..6.0) {
        let curves = vec![
            ResponseCurve::new("tv", 6_000.0, 1.2, 0.9, 1_500.0),
            ResponseCurve::new("search", 2_500.0, 1.0, 1.0, 600.0),
        ];
        let hist = [1_000.0, 600.0];
        let lower = [0.1 * hist[0], 0.1 * hist[1]];
        let upper = [5.0 * hist[0], 5.0 * hist[1]];
        let opts = SolverOptions { restarts: 3, ..Default::default() };
        let solve = |t: f64| solve_target_efficiency(&curves, &lower, &upper, &hist, DepVarType::Revenue, t, opts).unwrap().budget;
        let (lo_t, hi_t) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        // Bisection tolerance allows a 0.5% overlap in efficiency terms.
        prop_assert!(solve(hi_t) <= solve(lo_t) * 1.01 + 1e-9);
    }
}
