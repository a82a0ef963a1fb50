//! Normal approximation of the law of `R(t)` and the coverage-study
//! harness that measures its accuracy against simulation.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::moments::solve_moments;
use crate::ode::SolverConfig;
use crate::sim::monte_carlo;

/// Standard normal CDF, accurate to ~1e-15 via the complementary error
/// function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal CDF: Acklam's rational approximation polished
/// with one Newton step, giving ~1e-13 absolute accuracy.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Model(format!("quantile level {p} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };
    x -= (std_normal_cdf(x) - p) / std_normal_pdf(x);
    Ok(x)
}

/// `p`-quantile of `N(mean, var)`.
pub fn normal_quantile(mean: f64, var: f64, p: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::Model(format!("variance must be positive, got {var}")));
    }
    Ok(mean + var.sqrt() * std_normal_quantile(p)?)
}

/// `P(N(mean, var) <= z)`.
pub fn normal_approx_cdf(mean: f64, var: f64, z: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::Model(format!("variance must be positive, got {var}")));
    }
    Ok(std_normal_cdf((z - mean) / var.sqrt()))
}

/// One coverage measurement: the empirical frequency of
/// `R(t) <= quantile` against the nominal level.
#[derive(Debug, Clone)]
pub struct CoverageRow {
    pub t: f64,
    pub p: f64,
    pub quantile: f64,
    pub coverage: f64,
    pub ci_halfwidth: f64,
}

/// Coverage rows plus the metadata needed to reproduce them.
#[derive(Debug, Clone)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    pub n_paths: usize,
    pub seed: u64,
    pub config: SolverConfig,
    /// `(t, E R(t), Var R(t))` per horizon, from the moment solves.
    pub moments: Vec<(f64, f64, f64)>,
}

/// For each horizon: solve the moment ODEs, form normal quantiles at the
/// requested levels, and read the empirical CDF of one shared `n_paths`
/// ensemble at those quantiles.
pub fn coverage_study(
    model: &ModelSpec,
    times: &[f64],
    levels: &[f64],
    n_paths: usize,
    seed: u64,
    workers: usize,
    config: &SolverConfig,
) -> Result<CoverageTable> {
    if times.is_empty() || levels.is_empty() {
        return Err(Error::Model("need at least one horizon and one level".into()));
    }
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Model("horizons must be positive".into()));
    }
    for &p in levels {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Model(format!("level {p} outside (0, 1)")));
        }
    }
    let mut rows = Vec::with_capacity(times.len() * levels.len());
    let mut moments = Vec::with_capacity(times.len());
    for &t in times {
        let sol = solve_moments(model, t, config)?;
        let mean = sol.expected_reward();
        let var = sol.variance();
        moments.push((t, mean, var));
        let quantiles: Vec<f64> = levels
            .iter()
            .map(|&p| normal_quantile(mean, var, p))
            .collect::<Result<_>>()?;
        let stats = monte_carlo(model, t, n_paths, seed, workers, &quantiles)?;
        for (i, &p) in levels.iter().enumerate() {
            rows.push(CoverageRow {
                t,
                p,
                quantile: quantiles[i],
                coverage: stats.ecdf[i].coverage,
                ci_halfwidth: stats.ecdf[i].ci_halfwidth,
            });
        }
    }
    Ok(CoverageTable {
        rows,
        n_paths,
        seed,
        config: config.clone(),
        moments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_mean() {
        assert_eq!(normal_quantile(3.5, 2.0, 0.5).unwrap(), 3.5);
    }

    #[test]
    fn standard_quantiles() {
        let q = normal_quantile(0.0, 1.0, 0.975).unwrap();
        assert!((q - 1.9599640).abs() < 1e-6);
        let q = normal_quantile(10.0, 4.0, 0.975).unwrap();
        assert!((q - 13.9199279).abs() < 1e-6);
    }

    #[test]
    fn cdf_values() {
        assert_eq!(normal_approx_cdf(2.0, 5.0, 2.0).unwrap(), 0.5);
        assert!((std_normal_cdf(2.326348) - 0.99).abs() < 1e-6);
        assert!((normal_approx_cdf(0.0, 1.0, 40.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(normal_approx_cdf(0.0, 1.0, -40.0).unwrap() < 1e-300);
    }

    #[test]
    fn quantile_cdf_round_trip() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let z = normal_quantile(2.0, 9.0, p).unwrap();
            let back = normal_approx_cdf(2.0, 9.0, z).unwrap();
            assert!((back - p).abs() < 1e-9, "p={p} back={back}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(normal_quantile(0.0, 1.0, 0.0).is_err());
        assert!(normal_quantile(0.0, 1.0, 1.0).is_err());
        assert!(normal_quantile(0.0, 0.0, 0.5).is_err());
        assert!(normal_approx_cdf(0.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn extreme_tails_are_accurate() {
        // Quantiles far out in the tail still round-trip through the cdf.
        for &p in &[1e-6, 1e-4, 0.9999, 0.999999] {
            let z = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(z) - p).abs() < 1e-10 * p.max(1.0 - p).max(1e-2));
        }
    }
}
