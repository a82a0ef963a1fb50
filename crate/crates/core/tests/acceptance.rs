//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one PASS line on success (failures panic with details).
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines. The full 10,000-path coverage replication at
//! t = 256 is expensive and therefore `#[ignore]`d; run it explicitly
//! with `cargo test --test acceptance -- --ignored --nocapture`.

use mjp_reward::cltapprox::{coverage_study, normal_approx_cdf};
use mjp_reward::model::InitialDistribution;
use mjp_reward::models;
use mjp_reward::moments::{solve_moments, solve_moments_with, MomentOptions};
use mjp_reward::ode::{Method, SolverConfig};
use mjp_reward::periodic::solve_periodic;
use mjp_reward::resetting::{solve_resetting, ResetSpec};
use mjp_reward::sim::{monte_carlo, monte_carlo_resetting};
use mjp_reward::transition::{
    mixing_profile, prendiville_closed_form, transition_matrix, two_state_closed_form,
};
use mjp_reward::expr::TimeFunction;

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Simple deterministic generator for reproducible test points.
struct Lcg(u64);

impl Lcg {
    fn next_unit(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn criterion_01_convergence_orders() {
    let model = models::prendiville_example();
    let reference = solve_moments(&model, 1.0, &SolverConfig::dopri(1e-11, 1e-13))
        .unwrap()
        .expected_reward();
    let mut slopes = Vec::new();
    for method in [Method::Euler, Method::Rk2, Method::Rk4] {
        let mut pts = Vec::new();
        for p in 3..=9 {
            let h = 2.0f64.powi(-p);
            let er = solve_moments(&model, 1.0, &SolverConfig::fixed(method, h))
                .unwrap()
                .expected_reward();
            let rel = ((er - reference) / reference).abs();
            pts.push((h.ln(), rel.ln()));
        }
        slopes.push(least_squares_slope(&pts));
    }
    assert!(
        (slopes[0] - 1.0).abs() <= 0.3,
        "euler slope {} outside 1 +- 0.3",
        slopes[0]
    );
    assert!(
        (slopes[1] - 2.0).abs() <= 0.3,
        "rk2 slope {} outside 2 +- 0.3",
        slopes[1]
    );
    assert!(
        (slopes[2] - 4.0).abs() <= 0.5,
        "rk4 slope {} outside 4 +- 0.5",
        slopes[2]
    );
    eprintln!(
        "acceptance 01 PASS: convergence slopes euler {:.3}, rk2 {:.3}, rk4 {:.3}",
        slopes[0], slopes[1], slopes[2]
    );
}

#[test]
fn criterion_02_discontinuity_awareness() {
    let model = models::prendiville_example();
    let reference = solve_moments(&model, 1.0, &SolverConfig::dopri(1e-11, 1e-13))
        .unwrap()
        .expected_reward();
    let naive_opts = MomentOptions {
        discontinuity_aware: false,
        extra_boundaries: Vec::new(),
    };
    let mut aware_errors = Vec::new();
    for p in 3..=9 {
        let h = 2.0f64.powi(-p);
        let er = solve_moments(&model, 1.0, &SolverConfig::fixed(Method::Rk4, h))
            .unwrap()
            .expected_reward();
        aware_errors.push(((er - reference) / reference).abs());
    }
    for w in aware_errors.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-9),
            "aware rk4 error increased under halving: {aware_errors:?}"
        );
    }
    let h = 2.0f64.powi(-6);
    let aware = aware_errors[3];
    let naive_er =
        solve_moments_with(&model, 1.0, &SolverConfig::fixed(Method::Rk4, h), &naive_opts)
            .unwrap()
            .expected_reward();
    let naive = ((naive_er - reference) / reference).abs();
    assert!(
        naive >= 10.0 * aware,
        "at h=2^-6 naive error {naive:.3e} is not 10x aware error {aware:.3e}"
    );
    eprintln!(
        "acceptance 02 PASS: aware errors monotone; at h=2^-6 naive/aware = {:.1}",
        naive / aware
    );
}

#[test]
fn criterion_03_closed_form_equivalence() {
    let lam = TimeFunction::parse("2 + 0.5*sin(2*pi*t)").unwrap();
    let mu = TimeFunction::parse("3 - 2*exp(-t/4)").unwrap();
    // Two-state model with the Prendiville particle rates.
    let two_state = mjp_reward::modelfile::from_json(
        r#"{"model": {"states": 2, "rates": [
            {"from": 0, "to": 1, "expr": "2 + 0.5*sin(2*pi*t)"},
            {"from": 1, "to": 0, "expr": "3 - 2*exp(-t/4)"}
        ]}}"#,
    )
    .unwrap();
    let prendiville = models::prendiville_example();
    let config = SolverConfig::dopri(1e-10, 1e-13);
    let mut gen = Lcg(42);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let s = 2.0 * gen.next_unit();
        let t = s + 0.05 + 1.5 * gen.next_unit();
        let closed = two_state_closed_form(&lam, &mu, s, t, 1e-12).unwrap();
        let numeric = transition_matrix(&two_state, s, t, &config).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                worst = worst.max((closed.entry(x, y) - numeric.entry(x, y)).abs());
            }
        }
        let x = (gen.next_unit() * 11.0).floor().min(10.0) as usize;
        let row = prendiville_closed_form(11, &lam, &mu, s, t, x).unwrap();
        let full = transition_matrix(&prendiville, s, t, &config).unwrap();
        for y in 0..11 {
            worst = worst.max((row[y] - full.entry(x, y)).abs());
        }
        assert!(worst < 1e-6, "pair {i} (s={s}, t={t}): worst deviation {worst:.3e}");
    }
    eprintln!("acceptance 03 PASS: closed forms within 1e-6 of the forward equation (worst {worst:.3e})");
}

#[test]
fn criterion_04_analytic_moment_oracle() {
    let model = mjp_reward::modelfile::from_json(
        r#"{"model": {"states": 2, "rates": [
            {"from": 0, "to": 1, "expr": 1}, {"from": 1, "to": 0, "expr": 1}
        ]},
        "rewards": {"rate": [{"state": 0, "expr": 1}]},
        "initial": {"kind": "point", "state": 0},
        "bounds": {"lambda_bar": [1.0, 1.0], "beta_bar": [0.0, 0.0]}}"#,
    )
    .unwrap();
    let er = solve_moments(&model, 1.0, &SolverConfig::dopri(1e-12, 1e-14))
        .unwrap()
        .expected_reward();
    let analytic = 0.5 + (1.0 - (-2.0f64).exp()) / 4.0;
    assert!(
        (er - analytic).abs() <= 1e-7,
        "E R(1) = {er:.10} vs analytic {analytic:.10}"
    );
    eprintln!("acceptance 04 PASS: E R(1) = {er:.9} matches the analytic integral within 1e-7");
}

#[test]
fn criterion_05_mc_ode_agreement_t16() {
    for (name, model) in [
        ("prendiville", models::prendiville_example()),
        ("mm1k", models::mm1k_example()),
        ("multiserver", models::multiserver_example()),
    ] {
        let sol = solve_moments(&model, 16.0, &SolverConfig::dopri(1e-10, 1e-12)).unwrap();
        let stats = monte_carlo(&model, 16.0, 10_000, 7_2025, 0, &[]).unwrap();
        let dm = (stats.mean - sol.expected_reward()).abs();
        assert!(
            dm <= 3.0 * stats.se_mean,
            "{name}: |{} - {}| > 3 se = {}",
            stats.mean,
            sol.expected_reward(),
            3.0 * stats.se_mean
        );
        let dv = (stats.variance - sol.variance()).abs();
        assert!(
            dv <= 3.0 * stats.se_variance,
            "{name}: |{} - {}| > 3 se = {}",
            stats.variance,
            sol.variance(),
            3.0 * stats.se_variance
        );
        eprintln!(
            "acceptance 05 PASS ({name}): mean {:.4} vs {:.4} ({:.2} se), var {:.4} vs {:.4} ({:.2} se)",
            stats.mean,
            sol.expected_reward(),
            dm / stats.se_mean,
            stats.variance,
            sol.variance(),
            dv / stats.se_variance
        );
    }
}

#[test]
fn criterion_06_coverage_reproduction_desk_scale() {
    let model = models::prendiville_example();
    let levels = [0.01, 0.05, 0.5, 0.95, 0.99];
    let published: [f64; 5] = [0.0075, 0.0443, 0.5051, 0.9491, 0.9868];
    let n_ours = 5_000usize;
    let table = coverage_study(
        &model,
        &[64.0],
        &levels,
        n_ours,
        31_337,
        0,
        &SolverConfig::dopri(1e-11, 1e-13),
    )
    .unwrap();
    for (row, &pub_cov) in table.rows.iter().zip(&published) {
        let se_ours = (row.coverage * (1.0 - row.coverage) / n_ours as f64).sqrt();
        let se_pub = (pub_cov * (1.0 - pub_cov) / 10_000.0).sqrt();
        let combined = (se_ours * se_ours + se_pub * se_pub).sqrt();
        let diff = (row.coverage - pub_cov).abs();
        assert!(
            diff <= 3.0 * combined,
            "level {}: coverage {:.4} vs published {:.4} (3 combined se = {:.4})",
            row.p,
            row.coverage,
            pub_cov,
            3.0 * combined
        );
        eprintln!(
            "acceptance 06 PASS (p={}): coverage {:.4} vs published {:.4} ({:.2} combined se)",
            row.p,
            row.coverage,
            pub_cov,
            diff / combined
        );
    }
}

/// Extended replication of the published t = 256 coverage column with
/// 10,000 paths; ignored by default for runtime.
#[test]
#[ignore]
fn extended_coverage_t256() {
    let model = models::prendiville_example();
    let levels = [0.01, 0.05, 0.5, 0.95, 0.99];
    let published: [f64; 5] = [0.0096, 0.0530, 0.4951, 0.9496, 0.9896];
    let table = coverage_study(
        &model,
        &[256.0],
        &levels,
        10_000,
        31_337,
        0,
        &SolverConfig::dopri(1e-11, 1e-13),
    )
    .unwrap();
    for (row, &pub_cov) in table.rows.iter().zip(&published) {
        let se_ours = (row.coverage * (1.0 - row.coverage) / 10_000.0).sqrt();
        let se_pub = (pub_cov * (1.0 - pub_cov) / 10_000.0).sqrt();
        let combined = (se_ours * se_ours + se_pub * se_pub).sqrt().max(1e-4);
        eprintln!(
            "extended t=256 (p={}): coverage {:.4} vs published {:.4} ({:.2} combined se)",
            row.p,
            row.coverage,
            pub_cov,
            (row.coverage - pub_cov).abs() / combined
        );
        assert!((row.coverage - pub_cov).abs() <= 4.0 * combined);
    }
}

#[test]
fn criterion_07_periodic_constants() {
    // (a) stationary special case.
    let stationary = mjp_reward::modelfile::from_json(
        r#"{"model": {"states": 2, "rates": [
            {"from": 0, "to": 1, "expr": 1}, {"from": 1, "to": 0, "expr": 1}
        ]},
        "rewards": {"rate": [{"state": 0, "expr": 1}]},
        "initial": {"kind": "point", "state": 0},
        "breakpoints": {"period": 1.0},
        "bounds": {"lambda_bar": [1.0, 1.0], "beta_bar": [0.0, 0.0]}}"#,
    )
    .unwrap();
    let config = SolverConfig::dopri(1e-11, 1e-13);
    let c = solve_periodic(&stationary, &config, 1024).unwrap();
    assert!((c.alpha - 0.5).abs() <= 1e-10, "alpha {}", c.alpha);
    assert!((c.sigma2 - 0.25).abs() <= 1e-6, "sigma2 {}", c.sigma2);
    eprintln!(
        "acceptance 07a PASS: stationary alpha {:.12}, sigma2 {:.8}",
        c.alpha, c.sigma2
    );

    // (b) periodic test model against the direct moment route.
    let model = models::periodic_two_state_example();
    let cp = solve_periodic(&model, &config, 1024).unwrap();
    let er16 = solve_moments(&model, 16.0, &config).unwrap().expected_reward();
    let er32 = solve_moments(&model, 32.0, &config).unwrap().expected_reward();
    let slope = (er32 - er16) / 16.0;
    assert!(
        (cp.alpha - slope).abs() <= 1e-4,
        "alpha {} vs E R slope {}",
        cp.alpha,
        slope
    );
    let sol256 = solve_moments(&model, 256.0, &config).unwrap();
    let var_rate = sol256.variance() / 256.0;
    assert!(
        (cp.sigma2 - var_rate).abs() <= 0.05 * var_rate,
        "sigma2 {} vs Var R(256)/256 = {}",
        cp.sigma2,
        var_rate
    );
    eprintln!(
        "acceptance 07b PASS: alpha {:.8} vs slope {:.8}; sigma2 {:.6} vs V/t {:.6}",
        cp.alpha, slope, cp.sigma2, var_rate
    );

    // (c) structural residuals.
    assert!(cp.seam_residual <= 1e-7, "seam residual {}", cp.seam_residual);
    assert!(
        cp.fredholm_residual <= 1e-9,
        "Fredholm residual {}",
        cp.fredholm_residual
    );
    eprintln!(
        "acceptance 07c PASS: seam residual {:.2e}, Fredholm residual {:.2e}",
        cp.seam_residual, cp.fredholm_residual
    );
}

#[test]
fn criterion_08_resetting() {
    let model = models::periodic_two_state_example();
    let reset = ResetSpec::same_each_period(InitialDistribution::Point(0), 8);
    let sol = solve_resetting(&model, &reset, &SolverConfig::dopri(1e-10, 1e-12)).unwrap();
    // Additivity to machine precision.
    let mut m = 0.0;
    let mut v = 0.0;
    for (i, &(dm, dv)) in sol.per_period.iter().enumerate() {
        m += dm;
        v += dv;
        assert_eq!(sol.cumulative[i], (m, v), "cumulative sums must be exact");
    }
    let stats = monte_carlo_resetting(
        &model,
        &[InitialDistribution::Point(0)],
        8,
        20_000,
        90_210,
        0,
        &[],
    )
    .unwrap();
    let dm = (stats.mean - sol.total_mean()).abs();
    let dv = (stats.variance - sol.total_variance()).abs();
    assert!(
        dm <= 3.0 * stats.se_mean,
        "mean {} vs {} (3 se = {})",
        stats.mean,
        sol.total_mean(),
        3.0 * stats.se_mean
    );
    assert!(
        dv <= 3.0 * stats.se_variance,
        "variance {} vs {} (3 se = {})",
        stats.variance,
        sol.total_variance(),
        3.0 * stats.se_variance
    );
    eprintln!(
        "acceptance 08 PASS: resetting mean {:.5} vs MC {:.5} ({:.2} se), var {:.5} vs {:.5} ({:.2} se)",
        sol.total_mean(),
        stats.mean,
        dm / stats.se_mean,
        sol.total_variance(),
        stats.variance,
        dv / stats.se_variance
    );
}

#[test]
fn criterion_09_poisson_sanity() {
    let model = mjp_reward::modelfile::load(format!(
        "{}/../../models/poisson.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    let sol = solve_moments(&model, 4.0, &SolverConfig::fixed(Method::Rk4, 0.01)).unwrap();
    assert!((sol.expected_reward() - 8.0).abs() <= 1e-9, "mean {}", sol.expected_reward());
    assert!((sol.variance() - 8.0).abs() <= 1e-9, "variance {}", sol.variance());
    let stats = monte_carlo(&model, 4.0, 100_000, 5150, 0, &[]).unwrap();
    assert!((stats.mean - 8.0).abs() <= 3.0 * stats.se_mean);
    assert!((stats.variance - 8.0).abs() <= 3.0 * stats.se_variance);
    eprintln!(
        "acceptance 09 PASS: E = {:.10}, Var = {:.10}; MC {:.4}/{:.4}",
        sol.expected_reward(),
        sol.variance(),
        stats.mean,
        stats.variance
    );
}

#[test]
fn criterion_10_mixing_diagnostic() {
    let model = mjp_reward::modelfile::from_json(
        r#"{"model": {"states": 2, "rates": [
            {"from": 0, "to": 1, "expr": 1}, {"from": 1, "to": 0, "expr": 1}
        ]},
        "bounds": {"lambda_bar": [1.0, 1.0], "beta_bar": [0.0, 0.0]}}"#,
    )
    .unwrap();
    let prof = mixing_profile(&model, 0.0, 2.0, 0.5, &SolverConfig::dopri(1e-11, 1e-13)).unwrap();
    for &u in &[0.5, 1.0, 2.0] {
        let (_, tv) = prof
            .iter()
            .find(|(uu, _)| (uu - u).abs() < 1e-12)
            .copied()
            .unwrap();
        let exact = 2.0 * (-2.0 * u).exp();
        assert!(
            (tv - exact).abs() <= 1e-6,
            "TV({u}) = {tv} vs analytic {exact}"
        );
    }
    eprintln!("acceptance 10 PASS: TV profile matches 2 exp(-2u) within 1e-6");

    // Sanity note from the normal-approximation side used throughout:
    // the CDF at the mean is one half.
    assert_eq!(normal_approx_cdf(3.0, 2.0, 3.0).unwrap(), 0.5);
}
