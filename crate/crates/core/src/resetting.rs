//! Statistics for models that are independently reset at integer times.
//!
//! Resetting makes per-period rewards independent, so means and variances
//! add: `E R(n) = sum E dR(i)` and `Var R(n) = sum Var dR(i)`. Each
//! period is one windowed moment solve with the period's initial law.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{InitialDistribution, ModelSpec};
use crate::moments::{solve_moments_window, MomentOptions};
use crate::ode::SolverConfig;

/// Per-period initial laws (cycled when shorter than the period count).
#[derive(Debug, Clone)]
pub struct ResetSpec {
    pub laws: Vec<InitialDistribution>,
    pub periods: usize,
}

impl ResetSpec {
    pub fn same_each_period(law: InitialDistribution, periods: usize) -> Self {
        ResetSpec {
            laws: vec![law],
            periods,
        }
    }

    fn law(&self, period_index: usize) -> &InitialDistribution {
        &self.laws[period_index % self.laws.len()]
    }
}

/// Per-period and cumulative reward statistics.
#[derive(Debug, Clone)]
pub struct ResetSolution {
    /// `(E dR(i), Var dR(i))` for `i = 1..=periods`.
    pub per_period: Vec<(f64, f64)>,
    /// Running sums of the above; the last entry is `(E R(n), Var R(n))`.
    pub cumulative: Vec<(f64, f64)>,
}

impl ResetSolution {
    pub fn total_mean(&self) -> f64 {
        self.cumulative.last().map(|c| c.0).unwrap_or(0.0)
    }

    pub fn total_variance(&self) -> f64 {
        self.cumulative.last().map(|c| c.1).unwrap_or(0.0)
    }

    /// Periods whose variance falls below `1e-10`: the normal
    /// approximation degenerates when every period is deterministic.
    pub fn low_variance_periods(&self) -> Vec<usize> {
        self.per_period
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| *v < 1e-10)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Solve each period `[i-1, i]` with its reset law and accumulate.
pub fn solve_resetting(
    model: &ModelSpec,
    reset: &ResetSpec,
    config: &SolverConfig,
) -> Result<ResetSolution> {
    if reset.periods == 0 || reset.laws.is_empty() {
        return Err(Error::Model("need at least one period and one reset law".into()));
    }
    for law in &reset.laws {
        law.pmf(model.d)?;
    }
    // Scheduled times may not sit on the reset boundary; R(n) would be
    // ambiguous there.
    for t_i in model.scheduled_times(reset.periods as f64) {
        if (t_i - t_i.round()).abs() < 1e-9 {
            return Err(Error::Model(format!(
                "scheduled time {t_i} is integer-valued; resetting requires non-integer schedules"
            )));
        }
    }
    let per_period: Vec<(f64, f64)> = (0..reset.periods)
        .into_par_iter()
        .map(|i| {
            let mu = reset.law(i).pmf(model.d)?;
            let sol = solve_moments_window(
                model,
                i as f64,
                (i + 1) as f64,
                &mu,
                config,
                &MomentOptions::default(),
            )?;
            Ok((sol.expected_reward(), sol.variance()))
        })
        .collect::<Result<_>>()?;
    let mut cumulative = Vec::with_capacity(per_period.len());
    let mut acc = (0.0, 0.0);
    for &(m, v) in &per_period {
        acc.0 += m;
        acc.1 += v;
        cumulative.push(acc);
    }
    Ok(ResetSolution {
        per_period,
        cumulative,
    })
}
