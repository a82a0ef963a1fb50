//! Built-in model constructors: a Prendiville ensemble with the full
//! reward structure, an `M_t/M_t/1/30` queue, and a multi-server queue
//! with shift-dependent staffing and a secular arrival trend.

use std::collections::BTreeMap;

use crate::expr::TimeFunction;
use crate::model::{
    BreakpointSet, ExternalRewards, InitialDistribution, LumpDistribution, ModelSpec, RateEntry,
    RewardSpec, ScheduleSpec, ScheduledRewards, SimBounds,
};

fn tf(text: &str) -> TimeFunction {
    TimeFunction::parse(text).expect("builtin expression parses")
}

/// Prendiville ensemble of 10 independent switching particles
/// (`d = 11`), with time-varying switching rates, a sawtooth-modulated
/// state reward, deterministic jump rewards, Beta-sum external rewards at
/// a periodic intensity, and state-valued scheduled rewards every 5 time
/// units.
pub fn prendiville_example() -> ModelSpec {
    let d = 11usize;
    let n = d - 1; // particles
    let mut rates = Vec::new();
    for x in 0..d {
        if x < n {
            rates.push(RateEntry {
                from: x,
                to: x + 1,
                rate: tf(&format!("{}*(2 + 0.5*sin(2*pi*t))", n - x)),
            });
        }
        if x > 0 {
            rates.push(RateEntry {
                from: x,
                to: x - 1,
                rate: tf(&format!("{}*(3 - 2*exp(-t/4))", x)),
            });
        }
    }
    let rate_reward: Vec<TimeFunction> = (0..d)
        .map(|x| tf(&format!("{x}*(7*t - floor(7*t)) + 0.1")))
        .collect();
    let mut jump_rewards = BTreeMap::new();
    for x in 0..n {
        jump_rewards.insert((x, x + 1), LumpDistribution::deterministic(1.0));
    }
    for x in 1..d {
        jump_rewards.insert((x, x - 1), LumpDistribution::deterministic(5.0));
    }
    // External reward in state x: 2 + 3 sum_{j<=x} Z_j + 6 sum_{j>x} Z_j
    // with iid Z ~ Beta(2, 5).
    let beta_component = |scale: f64| LumpDistribution::Beta {
        alpha: 2.0,
        beta: 5.0,
        scale: TimeFunction::constant(scale),
        shift: TimeFunction::constant(0.0),
    };
    let external_laws: Vec<LumpDistribution> = (0..d)
        .map(|x| {
            let mut parts = vec![LumpDistribution::deterministic(2.0)];
            for _ in 0..x {
                parts.push(beta_component(3.0));
            }
            for _ in x..n {
                parts.push(beta_component(6.0));
            }
            LumpDistribution::Sum(parts)
        })
        .collect();
    let scheduled_laws: Vec<LumpDistribution> = (0..d)
        .map(|x| LumpDistribution::deterministic(x as f64))
        .collect();
    let bounds = SimBounds {
        lambda_bar: (0..d)
            .map(|x| (n - x) as f64 * 2.5 + x as f64 * 3.0)
            .collect(),
        beta_bar: vec![0.75; d],
    };
    ModelSpec::new(
        d,
        rates,
        RewardSpec {
            rate_reward,
            jump_rewards,
            scheduled: Some(ScheduledRewards {
                times: ScheduleSpec::Arithmetic {
                    start: 5.0,
                    step: 5.0,
                },
                laws: scheduled_laws,
            }),
            external: Some(ExternalRewards {
                intensity: vec![tf("0.25*(2 + sin(2*pi*t))"); d],
                laws: external_laws,
            }),
        },
        InitialDistribution::Point(0),
        BreakpointSet {
            points: vec![],
            period: Some(1.0),
            // sawtooth kinks at multiples of 1/7
            period_points: (1..=7).map(|j| j as f64 / 7.0).collect(),
        },
        bounds,
    )
    .expect("builtin Prendiville model is well-formed")
}

/// Single-server Markovian queue with capacity 30, sinusoidal arrival
/// and service rates, reward rate `x + 1`, starting from a truncated
/// geometric fit to the initial traffic intensity.
pub fn mm1k_example() -> ModelSpec {
    let d = 31usize;
    let capacity = d - 1;
    let mut rates = Vec::new();
    for x in 0..d {
        if x < capacity {
            rates.push(RateEntry {
                from: x,
                to: x + 1,
                rate: tf("12 + 10*sin(pi*t)"),
            });
        }
        if x > 0 {
            rates.push(RateEntry {
                from: x,
                to: x - 1,
                rate: tf("25 + 10*sin(pi/3*(t - 1/4))"),
            });
        }
    }
    let rate_reward: Vec<TimeFunction> = (0..d)
        .map(|x| TimeFunction::constant((x + 1) as f64))
        .collect();
    let mu0 = 25.0 + 10.0 * (std::f64::consts::PI / 3.0 * (-0.25)).sin();
    let ratio = 12.0 / mu0;
    let bounds = SimBounds {
        lambda_bar: (0..d)
            .map(|x| {
                let birth = if x < capacity { 22.0 } else { 0.0 };
                let death = if x > 0 { 35.0 } else { 0.0 };
                birth + death
            })
            .collect(),
        beta_bar: vec![0.0; d],
    };
    ModelSpec::new(
        d,
        rates,
        RewardSpec {
            rate_reward,
            jump_rewards: BTreeMap::new(),
            scheduled: None,
            external: None,
        },
        InitialDistribution::TruncatedGeometric { ratio },
        BreakpointSet::default(),
        bounds,
    )
    .expect("builtin M_t/M_t/1/30 model is well-formed")
}

/// Multi-server queue with capacity 80: arrivals carry two cosine
/// harmonics plus a secular ramp that saturates at `t = 36`; per-server
/// service degrades linearly over each unit-length shift; staffing cycles
/// through 30, 20, 25 servers. Reward rate is `x + 1`.
pub fn multiserver_example() -> ModelSpec {
    let d = 81usize;
    let capacity = d - 1;
    let arrival = "35 + 10*cos(2*pi/3*t) + 10*cos(4*pi/3*(t + 3/8)) + min(t, 36)";
    // Shift index within the 3-shift cycle, as a quadratic through the
    // staffing levels (30, 20, 25) at cycle positions (0, 1, 2).
    let servers = "(7.5*(floor(t) - 3*floor(floor(t)/3))^2 - 17.5*(floor(t) - 3*floor(floor(t)/3)) + 30)";
    let per_server = "(4 - (t - floor(t))/3)";
    let mut rates = Vec::new();
    for x in 0..d {
        if x < capacity {
            rates.push(RateEntry {
                from: x,
                to: x + 1,
                rate: tf(arrival),
            });
        }
        if x > 0 {
            rates.push(RateEntry {
                from: x,
                to: x - 1,
                rate: tf(&format!("min({x}, {servers})*{per_server}")),
            });
        }
    }
    let rate_reward: Vec<TimeFunction> = (0..d)
        .map(|x| TimeFunction::constant((x + 1) as f64))
        .collect();
    // Initial law: stationary M/M/30/80 with arrival 45 and service 4.
    let offered = 45.0 / 4.0;
    let mut pmf = vec![0.0; d];
    pmf[0] = 1.0;
    for x in 1..d {
        pmf[x] = pmf[x - 1] * offered / (x.min(30) as f64);
    }
    let total: f64 = pmf.iter().sum();
    for v in &mut pmf {
        *v /= total;
    }
    let bounds = SimBounds {
        lambda_bar: (0..d)
            .map(|x| {
                let birth = if x < capacity { 91.0 } else { 0.0 };
                let death = if x > 0 { (x.min(30) as f64) * 4.0 } else { 0.0 };
                birth + death
            })
            .collect(),
        beta_bar: vec![0.0; d],
    };
    ModelSpec::new(
        d,
        rates,
        RewardSpec {
            rate_reward,
            jump_rewards: BTreeMap::new(),
            scheduled: None,
            external: None,
        },
        InitialDistribution::Pmf(pmf),
        BreakpointSet {
            points: vec![36.0],
            period: Some(1.0),
            // shift changes at every integer
            period_points: vec![1.0],
        },
        bounds,
    )
    .expect("builtin multi-server model is well-formed")
}

/// The two-state periodic test model: up-rate `2 + sin(2 pi t)`, constant
/// down-rate 3, reward indicator of state 0.
pub fn periodic_two_state_example() -> ModelSpec {
    ModelSpec::new(
        2,
        vec![
            RateEntry {
                from: 0,
                to: 1,
                rate: tf("2 + sin(2*pi*t)"),
            },
            RateEntry {
                from: 1,
                to: 0,
                rate: TimeFunction::constant(3.0),
            },
        ],
        RewardSpec {
            rate_reward: vec![TimeFunction::constant(1.0), TimeFunction::constant(0.0)],
            jump_rewards: BTreeMap::new(),
            scheduled: None,
            external: None,
        },
        InitialDistribution::Point(0),
        BreakpointSet {
            points: vec![],
            period: Some(1.0),
            period_points: vec![],
        },
        SimBounds {
            lambda_bar: vec![3.0, 3.0],
            beta_bar: vec![0.0, 0.0],
        },
    )
    .expect("periodic test model is well-formed")
}

/// Builtin lookup by name, as used by model files.
pub fn builtin(name: &str) -> Option<ModelSpec> {
    match name {
        "prendiville" => Some(prendiville_example()),
        "mm1k" => Some(mm1k_example()),
        "multiserver" => Some(multiserver_example()),
        "periodic_two_state" => Some(periodic_two_state_example()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use crate::moments::effective_rate;
    use crate::ode::Side;

    #[test]
    fn all_builtins_validate() {
        for name in ["prendiville", "mm1k", "multiserver", "periodic_two_state"] {
            let model = builtin(name).unwrap();
            let report = validate_model(&model, 64);
            assert!(report.valid(), "{name}: {report:?}");
        }
    }

    #[test]
    fn prendiville_rates_at_reference_points() {
        let model = prendiville_example();
        // up-rate from 0 at t = 0.25: 10 * (2 + 0.5) = 25
        let up = model
            .rates
            .iter()
            .find(|e| e.from == 0 && e.to == 1)
            .unwrap();
        assert!((up.rate.eval(0.25, 0.0).unwrap() - 25.0).abs() < 1e-12);
        // down-rate from 1 at t = 0: 1 * (3 - 2) = 1
        let down = model
            .rates
            .iter()
            .find(|e| e.from == 1 && e.to == 0)
            .unwrap();
        assert!((down.rate.eval(0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        // jump rewards
        assert_eq!(
            model.rewards.jump_rewards[&(0, 1)].mean(0.0).unwrap(),
            1.0
        );
        assert_eq!(
            model.rewards.jump_rewards[&(1, 0)].mean(0.0).unwrap(),
            5.0
        );
        // external intensity at t = 0
        assert!((model.rewards.beta(0.0, 3).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prendiville_effective_rate_at_state_zero() {
        let model = prendiville_example();
        // r = 0.1, jump accrual 10 * lambda(0) * 1 = 20, external
        // 0.5 * (2 + 60 * 2/7).
        let expected = 0.1 + 20.0 + 0.5 * (2.0 + 60.0 * 2.0 / 7.0);
        assert!((effective_rate(&model, 0.0, 0).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn prendiville_breakpoints_are_sevenths_plus_schedule() {
        let model = prendiville_example();
        let pts = model.breakpoints_within(2.0);
        let expected: Vec<f64> = (1..14).map(|j| j as f64 / 7.0).collect();
        assert_eq!(pts.len(), expected.len());
        for (a, b) in pts.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let pts6 = model.breakpoints_within(6.0);
        assert!(pts6.iter().any(|p| (*p - 5.0).abs() < 1e-12), "schedule merged");
    }

    #[test]
    fn mm1k_reference_values() {
        let model = mm1k_example();
        let birth = model
            .rates
            .iter()
            .find(|e| e.from == 0 && e.to == 1)
            .unwrap();
        assert!((birth.rate.eval(0.0, 0.0).unwrap() - 12.0).abs() < 1e-12);
        let death = model
            .rates
            .iter()
            .find(|e| e.from == 1 && e.to == 0)
            .unwrap();
        assert!((death.rate.eval(0.0, 1.0).unwrap() - 22.411809548974793).abs() < 1e-9);
        if let InitialDistribution::TruncatedGeometric { ratio } = model.initial {
            assert!((ratio - 0.5354319995).abs() < 1e-9);
        } else {
            panic!("expected truncated geometric initial law");
        }
        assert!(
            !model.rates.iter().any(|e| e.from == 30 && e.to == 31),
            "capacity state has no birth"
        );
        assert_eq!(model.d, 31);
    }

    #[test]
    fn multiserver_reference_values() {
        let model = multiserver_example();
        let birth = model
            .rates
            .iter()
            .find(|e| e.from == 0 && e.to == 1)
            .unwrap();
        assert!((birth.rate.eval(0.0, 0.0).unwrap() - 45.0).abs() < 1e-12);
        // Second shift (t in [1,2)) has 20 servers: death rate from a high
        // state is 20 * mu(t); at t = 1.5, mu = 4 - 0.5/3.
        let death80 = model
            .rates
            .iter()
            .find(|e| e.from == 80 && e.to == 79)
            .unwrap();
        let v = death80.rate.eval(1.5, 80.0).unwrap();
        assert!((v - 20.0 * (4.0 - 0.5 / 3.0)).abs() < 1e-9, "got {v}");
        // Just before a shift ends the per-server rate is 4 - 1/3.
        let death1 = model
            .rates
            .iter()
            .find(|e| e.from == 1 && e.to == 0)
            .unwrap();
        let v = death1.rate.eval(Side::Left.adjust(1.0), 1.0).unwrap();
        assert!((v - (4.0 - 1.0 / 3.0)).abs() < 1e-6, "got {v}");
        // Third shift: 25 servers.
        let v = death80.rate.eval(2.25, 80.0).unwrap();
        assert!((v - 25.0 * (4.0 - 0.25 / 3.0)).abs() < 1e-9);
        // Cycle repeats: shift 4 has 30 again.
        let v = death80.rate.eval(3.1, 80.0).unwrap();
        assert!((v - 30.0 * (4.0 - 0.1 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn multiserver_breakpoints_cover_integers_and_secular_kink() {
        let model = multiserver_example();
        let pts = model.breakpoints_within(40.0);
        for k in 1..40 {
            assert!(
                pts.iter().any(|p| (*p - k as f64).abs() < 1e-12),
                "missing integer breakpoint {k}"
            );
        }
        // 36 appears once even though it is both secular kink and integer.
        let count36 = pts.iter().filter(|p| (**p - 36.0).abs() < 1e-12).count();
        assert_eq!(count36, 1);
    }
}
