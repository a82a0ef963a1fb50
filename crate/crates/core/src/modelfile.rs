//! JSON model files.
//!
//! A document either names a builtin model or spells one out:
//!
//! ```json
//! {
//!   "model": {"states": 2, "rates": [
//!     {"from": 0, "to": 1, "expr": "2 + sin(2*pi*t)"},
//!     {"from": 1, "to": 0, "expr": 3}
//!   ]},
//!   "rewards": {
//!     "rate": [{"state": "all", "expr": "x + 1"}],
//!     "jump": [{"from": 0, "to": 1, "dist": {"kind": "deterministic", "value": 1}}],
//!     "scheduled": {"times": {"kind": "arithmetic", "start": 5, "step": 5},
//!                    "dist": {"kind": "deterministic", "value": "x"}},
//!     "external": {"intensity": [{"state": "all", "expr": 0.5}],
//!                   "dist": {"kind": "beta", "alpha": 2, "beta": 5}}
//!   },
//!   "initial": {"kind": "point", "state": 0},
//!   "breakpoints": {"points": [36.0], "period": 1.0, "period_points": [1.0]},
//!   "bounds": {"lambda_bar": [4.0, 3.0], "beta_bar": [0.5, 0.5]}
//! }
//! ```
//!
//! Expression fields accept either a JSON number or an expression string
//! over `t` and `x`; shared (`"all"`/`"dist"`) entries have `x` bound to
//! the concrete state index at load time, which keeps lump moments
//! analytic downstream. Unknown keys are rejected. When `bounds` is
//! omitted, dominating rates are probed on a grid and inflated by 50%;
//! the simulator still aborts if a true rate ever exceeds them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{parse, TimeFunction};
use crate::model::{
    BreakpointSet, ExternalRewards, InitialDistribution, LumpDistribution, ModelSpec, RateEntry,
    RewardSpec, ScheduleSpec, ScheduledRewards, SimBounds,
};
use crate::models;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    model: ModelSection,
    #[serde(default)]
    rewards: Option<RewardsSection>,
    #[serde(default)]
    initial: Option<InitialSection>,
    #[serde(default)]
    breakpoints: Option<BreakpointsSection>,
    #[serde(default)]
    bounds: Option<BoundsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    #[serde(default)]
    builtin: Option<BuiltinSection>,
    #[serde(default)]
    states: Option<usize>,
    #[serde(default)]
    rates: Option<Vec<RateSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuiltinSection {
    name: String,
    /// Reserved; the shipped builtins take no parameters.
    #[serde(default)]
    params: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateSection {
    from: usize,
    to: usize,
    expr: ExprField,
}

/// An expression given as a string or a bare number.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ExprField {
    Number(f64),
    Text(String),
}

impl ExprField {
    fn to_fn(&self, what: &str) -> Result<TimeFunction> {
        match self {
            ExprField::Number(v) => Ok(TimeFunction::constant(*v)),
            ExprField::Text(s) => parse(s)
                .map(TimeFunction::new)
                .map_err(|e| Error::ModelFile(format!("{what}: {e}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardsSection {
    #[serde(default)]
    rate: Vec<StateExpr>,
    #[serde(default)]
    jump: Vec<JumpSection>,
    #[serde(default)]
    scheduled: Option<ScheduledSection>,
    #[serde(default)]
    external: Option<ExternalSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateExpr {
    state: StateSelector,
    expr: ExprField,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StateSelector {
    All(String),
    Index(usize),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpSection {
    from: usize,
    to: usize,
    dist: DistSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduledSection {
    times: TimesSection,
    #[serde(default)]
    dist: Option<DistSection>,
    #[serde(default)]
    dist_per_state: Option<Vec<DistSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TimesSection {
    Arithmetic { start: f64, step: f64 },
    Explicit { points: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalSection {
    intensity: Vec<StateExpr>,
    #[serde(default)]
    dist: Option<DistSection>,
    #[serde(default)]
    dist_per_state: Option<Vec<DistSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DistSection {
    Deterministic {
        value: ExprField,
    },
    Beta {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        scale: Option<ExprField>,
        #[serde(default)]
        shift: Option<ExprField>,
    },
    Sum {
        components: Vec<DistSection>,
    },
}

impl DistSection {
    fn to_law(&self) -> Result<LumpDistribution> {
        Ok(match self {
            DistSection::Deterministic { value } => LumpDistribution::Deterministic {
                value: value.to_fn("deterministic value")?,
            },
            DistSection::Beta {
                alpha,
                beta,
                scale,
                shift,
            } => LumpDistribution::Beta {
                alpha: *alpha,
                beta: *beta,
                scale: match scale {
                    Some(e) => e.to_fn("beta scale")?,
                    None => TimeFunction::constant(1.0),
                },
                shift: match shift {
                    Some(e) => e.to_fn("beta shift")?,
                    None => TimeFunction::constant(0.0),
                },
            },
            DistSection::Sum { components } => LumpDistribution::Sum(
                components
                    .iter()
                    .map(|c| c.to_law())
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InitialSection {
    Point { state: usize },
    Pmf { weights: Vec<f64> },
    TruncatedGeometric { ratio: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BreakpointsSection {
    #[serde(default)]
    points: Vec<f64>,
    #[serde(default)]
    period: Option<f64>,
    #[serde(default)]
    period_points: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    lambda_bar: Vec<f64>,
    beta_bar: Vec<f64>,
}

/// Load a model from a JSON document string.
pub fn from_json(text: &str) -> Result<ModelSpec> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
    build(doc)
}

/// Load a model from a JSON file.
pub fn load(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
    from_json(&text)
}

fn build(doc: Document) -> Result<ModelSpec> {
    if let Some(builtin) = &doc.model.builtin {
        if doc.model.states.is_some() || doc.model.rates.is_some() {
            return Err(Error::ModelFile(
                "a builtin model cannot also define states/rates".into(),
            ));
        }
        if doc.rewards.is_some() || doc.initial.is_some() || doc.breakpoints.is_some() || doc.bounds.is_some() {
            return Err(Error::ModelFile(
                "a builtin model cannot be combined with other sections".into(),
            ));
        }
        if builtin.params.as_ref().is_some_and(|p| !p.is_empty()) {
            return Err(Error::ModelFile(format!(
                "builtin `{}` takes no parameters",
                builtin.name
            )));
        }
        return models::builtin(&builtin.name).ok_or_else(|| {
            Error::ModelFile(format!(
                "unknown builtin `{}` (known: prendiville, mm1k, multiserver, periodic_two_state)",
                builtin.name
            ))
        });
    }
    let d = doc
        .model
        .states
        .ok_or_else(|| Error::ModelFile("model.states is required".into()))?;
    if d == 0 {
        return Err(Error::ModelFile("model.states must be positive".into()));
    }
    let mut rates = Vec::new();
    for r in doc.model.rates.unwrap_or_default() {
        let rate = r
            .expr
            .to_fn(&format!("rate {} -> {}", r.from, r.to))?
            .bind_state(r.from as f64);
        rates.push(RateEntry {
            from: r.from,
            to: r.to,
            rate,
        });
    }

    let rewards = match &doc.rewards {
        None => RewardSpec::zero(d),
        Some(sec) => {
            let mut rate_reward = vec![TimeFunction::constant(0.0); d];
            apply_state_exprs(&sec.rate, d, &mut rate_reward, "rewards.rate")?;
            let mut jump_rewards = BTreeMap::new();
            for j in &sec.jump {
                jump_rewards.insert((j.from, j.to), j.dist.to_law()?.bind_state(j.from as f64));
            }
            let scheduled = match &sec.scheduled {
                None => None,
                Some(s) => {
                    let times = match &s.times {
                        TimesSection::Arithmetic { start, step } => ScheduleSpec::Arithmetic {
                            start: *start,
                            step: *step,
                        },
                        TimesSection::Explicit { points } => ScheduleSpec::Explicit(points.clone()),
                    };
                    let laws = per_state_laws(&s.dist, &s.dist_per_state, d, "rewards.scheduled")?;
                    Some(ScheduledRewards { times, laws })
                }
            };
            let external = match &sec.external {
                None => None,
                Some(e) => {
                    let mut intensity = vec![TimeFunction::constant(0.0); d];
                    apply_state_exprs(&e.intensity, d, &mut intensity, "rewards.external.intensity")?;
                    let laws = per_state_laws(&e.dist, &e.dist_per_state, d, "rewards.external")?;
                    Some(ExternalRewards { intensity, laws })
                }
            };
            RewardSpec {
                rate_reward,
                jump_rewards,
                scheduled,
                external,
            }
        }
    };

    let initial = match doc.initial {
        None => InitialDistribution::Point(0),
        Some(InitialSection::Point { state }) => InitialDistribution::Point(state),
        Some(InitialSection::Pmf { weights }) => InitialDistribution::Pmf(weights),
        Some(InitialSection::TruncatedGeometric { ratio }) => {
            InitialDistribution::TruncatedGeometric { ratio }
        }
    };

    let breakpoints = match doc.breakpoints {
        None => BreakpointSet::default(),
        Some(b) => BreakpointSet {
            points: b.points,
            period: b.period,
            period_points: b.period_points,
        },
    };

    let bounds = match doc.bounds {
        Some(b) => {
            if b.lambda_bar.len() != d || b.beta_bar.len() != d {
                return Err(Error::ModelFile(
                    "bounds arrays must have one entry per state".into(),
                ));
            }
            SimBounds {
                lambda_bar: b.lambda_bar,
                beta_bar: b.beta_bar,
            }
        }
        None => probe_bounds(d, &rates, &rewards, &breakpoints)?,
    };

    ModelSpec::new(d, rates, rewards, initial, breakpoints, bounds)
}

fn apply_state_exprs(
    entries: &[StateExpr],
    d: usize,
    out: &mut [TimeFunction],
    what: &str,
) -> Result<()> {
    for entry in entries {
        let tf = entry.expr.to_fn(what)?;
        match &entry.state {
            StateSelector::All(s) if s == "all" => {
                for (x, slot) in out.iter_mut().enumerate() {
                    *slot = tf.bind_state(x as f64);
                }
            }
            StateSelector::All(s) => {
                return Err(Error::ModelFile(format!(
                    "{what}: state selector must be \"all\" or an index, got \"{s}\""
                )));
            }
            StateSelector::Index(x) => {
                if *x >= d {
                    return Err(Error::ModelFile(format!("{what}: state {x} out of range")));
                }
                out[*x] = tf.bind_state(*x as f64);
            }
        }
    }
    Ok(())
}

fn per_state_laws(
    shared: &Option<DistSection>,
    per_state: &Option<Vec<DistSection>>,
    d: usize,
    what: &str,
) -> Result<Vec<LumpDistribution>> {
    match (shared, per_state) {
        (Some(_), Some(_)) => Err(Error::ModelFile(format!(
            "{what}: give either dist or dist_per_state, not both"
        ))),
        (Some(dist), None) => {
            let law = dist.to_law()?;
            Ok((0..d).map(|x| law.bind_state(x as f64)).collect())
        }
        (None, Some(list)) => {
            if list.len() != d {
                return Err(Error::ModelFile(format!(
                    "{what}: dist_per_state must have one entry per state"
                )));
            }
            list.iter()
                .enumerate()
                .map(|(x, dist)| Ok(dist.to_law()?.bind_state(x as f64)))
                .collect()
        }
        (None, None) => Err(Error::ModelFile(format!(
            "{what}: a dist or dist_per_state is required"
        ))),
    }
}

/// Fallback dominating rates: grid maxima inflated by 50%.
fn probe_bounds(
    d: usize,
    rates: &[RateEntry],
    rewards: &RewardSpec,
    breakpoints: &BreakpointSet,
) -> Result<SimBounds> {
    let mut window: f64 = 16.0;
    for p in &breakpoints.points {
        window = window.max(p + 1.0);
    }
    if let Some(p) = breakpoints.period {
        window = window.max(2.0 * p);
    }
    let n = (window * 64.0).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| window * i as f64 / n as f64).collect();
    let mut lambda_bar = vec![0.0f64; d];
    let mut beta_bar = vec![0.0f64; d];
    for &t in &grid {
        let mut exit = vec![0.0; d];
        for e in rates {
            exit[e.from] += e.rate.eval(t, e.from as f64)?;
        }
        for x in 0..d {
            lambda_bar[x] = lambda_bar[x].max(exit[x]);
            if let Some(ext) = &rewards.external {
                beta_bar[x] = beta_bar[x].max(ext.intensity[x].eval(t, x as f64)?);
            }
        }
    }
    for v in lambda_bar.iter_mut().chain(beta_bar.iter_mut()) {
        *v *= 1.5;
    }
    Ok(SimBounds {
        lambda_bar,
        beta_bar,
    })
}
