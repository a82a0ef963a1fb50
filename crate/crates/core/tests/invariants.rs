//! Cross-module invariants: expression round-trips under random ASTs,
//! Chapman-Kolmogorov composition, fixed-step/adaptive agreement, and
//! simulation/ODE agreement at a small horizon.

use proptest::prelude::*;

use mjp_reward::expr::{parse, BinOp, Expr, Func};
use mjp_reward::models;
use mjp_reward::moments::solve_moments;
use mjp_reward::ode::{Method, SolverConfig};
use mjp_reward::sim::monte_carlo;
use mjp_reward::transition::{mixing_profile, transition_matrix};

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-100.0..100.0f64).prop_map(Expr::Num),
        Just(Expr::Time),
        Just(Expr::State),
        Just(Expr::Pi),
    ];
    leaf.prop_recursive(5, 64, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone(), 0..5usize).prop_map(|(a, b, op)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][op];
                Expr::Binary(op, Box::new(a), Box::new(b))
            }),
            (inner.clone(), 0..7usize).prop_map(|(a, f)| {
                let f = [
                    Func::Sin,
                    Func::Cos,
                    Func::Exp,
                    Func::Log,
                    Func::Sqrt,
                    Func::Abs,
                    Func::Floor,
                ][f];
                Expr::Call(f, vec![a])
            }),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Call(Func::Min, vec![a, b])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_parse_round_trip(ast in arb_expr()) {
        let printed = ast.to_string();
        let reparsed = parse(&printed).unwrap_or_else(|e| panic!("`{printed}` failed: {e}"));
        for i in 0..100 {
            let t = -3.0 + 0.07 * i as f64;
            let x = (i % 11) as f64;
            match (ast.eval(t, x), reparsed.eval(t, x)) {
                (Ok(a), Ok(b)) => prop_assert!(
                    a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                    "`{printed}` evaluates {a} vs {b} at t={t}, x={x}"
                ),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "`{printed}` error mismatch: {a:?} vs {b:?}"),
            }
        }
    }
}

#[test]
fn chapman_kolmogorov_on_prendiville() {
    let model = models::prendiville_example();
    let config = SolverConfig::dopri(1e-10, 1e-13);
    let triples = [(0.1, 0.6, 1.3), (0.0, 0.9, 1.1), (0.5, 1.0, 2.0)];
    for (s, u, t) in triples {
        let a = transition_matrix(&model, s, u, &config).unwrap();
        let b = transition_matrix(&model, u, t, &config).unwrap();
        let direct = transition_matrix(&model, s, t, &config).unwrap();
        let composed = a.compose(&b);
        for x in 0..model.d {
            for y in 0..model.d {
                assert!(
                    (composed.entry(x, y) - direct.entry(x, y)).abs() < 1e-7,
                    "({s},{u},{t}) entry ({x},{y})"
                );
            }
        }
    }
}

#[test]
fn prendiville_mixing_profile_decreases() {
    let model = models::prendiville_example();
    let prof = mixing_profile(&model, 0.0, 3.0, 0.5, &SolverConfig::dopri(1e-9, 1e-12)).unwrap();
    for w in prof.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-8, "profile not non-increasing: {prof:?}");
    }
    assert!(prof.last().unwrap().1 < prof[0].1, "profile should strictly decrease");
}

#[test]
fn dopri_agrees_with_rk4_on_example_models() {
    let rtol = 1e-8;
    let atol = 1e-10;
    for (name, model) in [
        ("prendiville", models::prendiville_example()),
        ("mm1k", models::mm1k_example()),
        ("multiserver", models::multiserver_example()),
        ("periodic_two_state", models::periodic_two_state_example()),
    ] {
        let fixed = solve_moments(&model, 4.0, &SolverConfig::fixed(Method::Rk4, 1e-3)).unwrap();
        let adaptive = solve_moments(&model, 4.0, &SolverConfig::dopri(rtol, atol)).unwrap();
        let a = fixed.expected_reward();
        let b = adaptive.expected_reward();
        let tol = (rtol * b.abs()).max(atol) * 10.0;
        assert!((a - b).abs() <= tol, "{name}: |{a} - {b}| > {tol}");
    }
}

#[test]
fn simulation_matches_moments_at_t4() {
    for (name, model, n_paths) in [
        ("prendiville", models::prendiville_example(), 10_000usize),
        ("mm1k", models::mm1k_example(), 10_000),
        ("multiserver", models::multiserver_example(), 10_000),
    ] {
        let sol = solve_moments(&model, 4.0, &SolverConfig::dopri(1e-9, 1e-12)).unwrap();
        let stats = monte_carlo(&model, 4.0, n_paths, 20260810, 0, &[]).unwrap();
        let dm = (stats.mean - sol.expected_reward()).abs();
        assert!(
            dm <= 3.0 * stats.se_mean,
            "{name}: mean {} vs {} (3 se = {})",
            stats.mean,
            sol.expected_reward(),
            3.0 * stats.se_mean
        );
        let dv = (stats.variance - sol.variance()).abs();
        assert!(
            dv <= 3.0 * stats.se_variance,
            "{name}: variance {} vs {} (3 se = {})",
            stats.variance,
            sol.variance(),
            3.0 * stats.se_variance
        );
    }
}
