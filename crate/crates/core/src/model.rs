//! Model and reward data types, lump-sum distribution moments, and
//! assumption validation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::expr::TimeFunction;

/// Tolerance for treating two breakpoint times as the same point.
const MERGE_TOL: f64 = 1e-12;

/// One off-diagonal entry of the rate matrix: jumps `from -> to` occur at
/// instantaneous rate `rate(t)`.
#[derive(Debug, Clone)]
pub struct RateEntry {
    pub from: usize,
    pub to: usize,
    pub rate: TimeFunction,
}

/// A lump-sum reward law with analytic first and second moments.
///
/// The enumeration is deliberately closed: deterministic values and affine
/// combinations of independent Beta variables cover every model we ship,
/// and the moment ODE systems need exact moments rather than samplers.
/// Parameters may depend on time through the expression language.
#[derive(Debug, Clone)]
pub enum LumpDistribution {
    /// A point mass at `value(t)`.
    Deterministic { value: TimeFunction },
    /// `shift(t) + scale(t) * Z` with `Z ~ Beta(alpha, beta)`.
    Beta {
        alpha: f64,
        beta: f64,
        scale: TimeFunction,
        shift: TimeFunction,
    },
    /// Sum of independent components.
    Sum(Vec<LumpDistribution>),
}

impl LumpDistribution {
    pub fn deterministic(v: f64) -> Self {
        LumpDistribution::Deterministic {
            value: TimeFunction::constant(v),
        }
    }

    /// First moment at time `t` (exact, not by quadrature).
    pub fn mean(&self, t: f64) -> Result<f64> {
        Ok(match self {
            LumpDistribution::Deterministic { value } => value.eval(t, 0.0)?,
            LumpDistribution::Beta {
                alpha,
                beta,
                scale,
                shift,
            } => shift.eval(t, 0.0)? + scale.eval(t, 0.0)? * alpha / (alpha + beta),
            LumpDistribution::Sum(parts) => {
                let mut m = 0.0;
                for p in parts {
                    m += p.mean(t)?;
                }
                m
            }
        })
    }

    /// Variance at time `t`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        Ok(match self {
            LumpDistribution::Deterministic { .. } => 0.0,
            LumpDistribution::Beta {
                alpha,
                beta,
                scale,
                ..
            } => {
                let s = scale.eval(t, 0.0)?;
                let ab = alpha + beta;
                s * s * alpha * beta / (ab * ab * (ab + 1.0))
            }
            LumpDistribution::Sum(parts) => {
                let mut v = 0.0;
                for p in parts {
                    v += p.variance(t)?;
                }
                v
            }
        })
    }

    /// Second moment at time `t`.
    pub fn second_moment(&self, t: f64) -> Result<f64> {
        let m = self.mean(t)?;
        Ok(self.variance(t)? + m * m)
    }

    /// `E (Z + c)^2 = M2 + 2 c M1 + c^2` for this law at time `t`.
    pub fn shifted_second_moment(&self, t: f64, c: f64) -> Result<f64> {
        Ok(self.second_moment(t)? + 2.0 * c * self.mean(t)? + c * c)
    }

    /// Draw one value at time `t`.
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        Ok(match self {
            LumpDistribution::Deterministic { value } => value.eval(t, 0.0)?,
            LumpDistribution::Beta {
                alpha,
                beta,
                scale,
                shift,
            } => {
                let dist = rand_distr::Beta::new(*alpha, *beta)
                    .map_err(|e| Error::Model(format!("bad Beta parameters: {e}")))?;
                shift.eval(t, 0.0)? + scale.eval(t, 0.0)? * dist.sample(rng)
            }
            LumpDistribution::Sum(parts) => {
                let mut v = 0.0;
                for p in parts {
                    v += p.sample(t, rng)?;
                }
                v
            }
        })
    }

    /// Bind the state variable in every parameter expression.
    pub fn bind_state(&self, x: f64) -> LumpDistribution {
        match self {
            LumpDistribution::Deterministic { value } => LumpDistribution::Deterministic {
                value: value.bind_state(x),
            },
            LumpDistribution::Beta {
                alpha,
                beta,
                scale,
                shift,
            } => LumpDistribution::Beta {
                alpha: *alpha,
                beta: *beta,
                scale: scale.bind_state(x),
                shift: shift.bind_state(x),
            },
            LumpDistribution::Sum(parts) => {
                LumpDistribution::Sum(parts.iter().map(|p| p.bind_state(x)).collect())
            }
        }
    }

    /// Upper end of the support at time `t` (used by the A4 check).
    fn support_max(&self, t: f64) -> Result<f64> {
        Ok(match self {
            LumpDistribution::Deterministic { value } => value.eval(t, 0.0)?,
            LumpDistribution::Beta { scale, shift, .. } => {
                shift.eval(t, 0.0)? + scale.eval(t, 0.0)?.max(0.0)
            }
            LumpDistribution::Sum(parts) => {
                let mut v = 0.0;
                for p in parts {
                    v += p.support_max(t)?;
                }
                v
            }
        })
    }

    /// Lower end of the support at time `t`.
    fn support_min(&self, t: f64) -> Result<f64> {
        Ok(match self {
            LumpDistribution::Deterministic { value } => value.eval(t, 0.0)?,
            LumpDistribution::Beta { scale, shift, .. } => {
                shift.eval(t, 0.0)? + scale.eval(t, 0.0)?.min(0.0)
            }
            LumpDistribution::Sum(parts) => {
                let mut v = 0.0;
                for p in parts {
                    v += p.support_min(t)?;
                }
                v
            }
        })
    }
}

/// Exact first moment of a lump law at time `t`.
pub fn lump_mean(dist: &LumpDistribution, t: f64) -> Result<f64> {
    dist.mean(t)
}

/// Exact `E (Z + c)^2` of a lump law at time `t`.
pub fn lump_shifted_second_moment(dist: &LumpDistribution, t: f64, c: f64) -> Result<f64> {
    dist.shifted_second_moment(t, c)
}

/// Deterministic times at which scheduled rewards are collected.
#[derive(Debug, Clone)]
pub enum ScheduleSpec {
    /// `start, start + step, start + 2*step, ...`
    Arithmetic { start: f64, step: f64 },
    /// An explicit strictly increasing list.
    Explicit(Vec<f64>),
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScheduleSpec::Arithmetic { start, step } => {
                if !(*start > 0.0) || !(*step > 0.0) {
                    return Err(Error::Model(
                        "arithmetic schedule requires start > 0 and step > 0".into(),
                    ));
                }
            }
            ScheduleSpec::Explicit(times) => {
                if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
                    return Err(Error::Model("scheduled times must be positive".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Model(
                        "scheduled times must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Scheduled times `t_i` with `0 < t_i <= horizon`.
    pub fn times_within(&self, horizon: f64) -> Vec<f64> {
        match self {
            ScheduleSpec::Arithmetic { start, step } => {
                let mut out = Vec::new();
                let mut i = 0u64;
                loop {
                    let t = start + step * i as f64;
                    if t > horizon * (1.0 + 1e-14) {
                        break;
                    }
                    out.push(t.min(horizon));
                    i += 1;
                }
                out
            }
            ScheduleSpec::Explicit(times) => times
                .iter()
                .copied()
                .filter(|t| *t <= horizon * (1.0 + 1e-14))
                .collect(),
        }
    }

    /// Smallest gap between successive scheduled times.
    pub fn min_gap(&self) -> f64 {
        match self {
            ScheduleSpec::Arithmetic { step, .. } => *step,
            ScheduleSpec::Explicit(times) => times
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Scheduled lump-sum rewards: per-state laws collected at the schedule's
/// times.
#[derive(Debug, Clone)]
pub struct ScheduledRewards {
    pub times: ScheduleSpec,
    /// One law per state.
    pub laws: Vec<LumpDistribution>,
}

/// External lump-sum rewards: a Poisson stream modulated by the occupied
/// state, paying from a per-state law at each event.
#[derive(Debug, Clone)]
pub struct ExternalRewards {
    /// Intensity `beta(t, x)`, one function per state.
    pub intensity: Vec<TimeFunction>,
    /// One law per state.
    pub laws: Vec<LumpDistribution>,
}

/// The full reward structure.
#[derive(Debug, Clone)]
pub struct RewardSpec {
    /// Reward accrual rate `r(t, x)`, one function per state.
    pub rate_reward: Vec<TimeFunction>,
    /// Lump law per directed edge `(from, to)`; edges not present pay zero.
    pub jump_rewards: BTreeMap<(usize, usize), LumpDistribution>,
    pub scheduled: Option<ScheduledRewards>,
    pub external: Option<ExternalRewards>,
}

impl RewardSpec {
    /// All rewards identically zero.
    pub fn zero(d: usize) -> Self {
        RewardSpec {
            rate_reward: vec![TimeFunction::constant(0.0); d],
            jump_rewards: BTreeMap::new(),
            scheduled: None,
            external: None,
        }
    }

    pub fn beta(&self, t: f64, x: usize) -> Result<f64> {
        match &self.external {
            Some(ext) => ext.intensity[x].eval(t, x as f64),
            None => Ok(0.0),
        }
    }
}

/// Distribution of the initial state `X(0)`.
#[derive(Debug, Clone)]
pub enum InitialDistribution {
    Point(usize),
    Pmf(Vec<f64>),
    /// `pmf(x) ∝ ratio^x` on `0..d-1`.
    TruncatedGeometric { ratio: f64 },
}

impl InitialDistribution {
    pub fn pmf(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            InitialDistribution::Point(x) => {
                if *x >= d {
                    return Err(Error::Model(format!("initial state {x} out of range")));
                }
                let mut p = vec![0.0; d];
                p[*x] = 1.0;
                Ok(p)
            }
            InitialDistribution::Pmf(p) => {
                if p.len() != d {
                    return Err(Error::Model("initial pmf length must equal state count".into()));
                }
                if p.iter().any(|v| *v < 0.0) {
                    return Err(Error::Model("initial pmf entries must be nonnegative".into()));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Model(format!(
                        "initial pmf sums to {s}, expected 1 within 1e-12"
                    )));
                }
                Ok(p.clone())
            }
            InitialDistribution::TruncatedGeometric { ratio } => {
                if !(*ratio > 0.0) || !(*ratio < 1.0) {
                    return Err(Error::Model("geometric ratio must lie in (0, 1)".into()));
                }
                let mut p: Vec<f64> = (0..d).map(|x| ratio.powi(x as i32)).collect();
                let s: f64 = p.iter().sum();
                for v in &mut p {
                    *v /= s;
                }
                Ok(p)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<usize> {
        let pmf = self.pmf(d)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (x, p) in pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(x);
            }
        }
        Ok(d - 1)
    }
}

/// Declared non-smooth points of the model data.
///
/// `points` are absolute times; `period_points` are offsets into one
/// period and repeat when `period` is set. Scheduled reward times are
/// always merged in by [`ModelSpec::breakpoints_within`].
#[derive(Debug, Clone, Default)]
pub struct BreakpointSet {
    pub points: Vec<f64>,
    pub period: Option<f64>,
    pub period_points: Vec<f64>,
}

impl BreakpointSet {
    /// Expand to the sorted, distinct points inside `(0, horizon)`.
    pub fn expand(&self, horizon: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .points
            .iter()
            .copied()
            .filter(|p| *p > 0.0 && *p < horizon)
            .collect();
        if let Some(p) = self.period {
            if p > 0.0 && !self.period_points.is_empty() {
                let mut k = 0u64;
                'outer: loop {
                    let base = p * k as f64;
                    if base >= horizon {
                        break;
                    }
                    for &off in &self.period_points {
                        let t = base + off;
                        if t >= horizon {
                            if off >= p {
                                break 'outer;
                            }
                            continue;
                        }
                        if t > 0.0 {
                            out.push(t);
                        }
                    }
                    k += 1;
                }
            }
        }
        sort_dedup(&mut out);
        out
    }
}

fn sort_dedup(points: &mut Vec<f64>) {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL * a.abs().max(1.0));
}

/// Per-state dominating rates used by the thinning simulator.
#[derive(Debug, Clone)]
pub struct SimBounds {
    /// `lambda_bar[x] >= sup_t lambda(t, x)` (total exit rate).
    pub lambda_bar: Vec<f64>,
    /// `beta_bar[x] >= sup_t beta(t, x)` (external intensity).
    pub beta_bar: Vec<f64>,
}

impl SimBounds {
    pub fn zero(d: usize) -> Self {
        SimBounds {
            lambda_bar: vec![0.0; d],
            beta_bar: vec![0.0; d],
        }
    }
}

/// A complete model: chain, rewards, initial law, breakpoints, and
/// simulation bounds. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub d: usize,
    pub rates: Vec<RateEntry>,
    pub rewards: RewardSpec,
    pub initial: InitialDistribution,
    pub breakpoints: BreakpointSet,
    pub bounds: SimBounds,
    outgoing: Vec<Vec<usize>>,
}

impl ModelSpec {
    pub fn new(
        d: usize,
        rates: Vec<RateEntry>,
        rewards: RewardSpec,
        initial: InitialDistribution,
        breakpoints: BreakpointSet,
        bounds: SimBounds,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Model("state count must be positive".into()));
        }
        for e in &rates {
            if e.from == e.to {
                return Err(Error::Model(format!(
                    "rate entry {} -> {} has equal endpoints",
                    e.from, e.to
                )));
            }
            if e.from >= d || e.to >= d {
                return Err(Error::Model(format!(
                    "rate entry {} -> {} out of range for {d} states",
                    e.from, e.to
                )));
            }
        }
        if rewards.rate_reward.len() != d {
            return Err(Error::Model("rate_reward must have one entry per state".into()));
        }
        for (&(from, to), _) in &rewards.jump_rewards {
            if from >= d || to >= d {
                return Err(Error::Model(format!(
                    "jump reward {from} -> {to} out of range"
                )));
            }
        }
        if let Some(s) = &rewards.scheduled {
            s.times.validate()?;
            if s.laws.len() != d {
                return Err(Error::Model("scheduled laws must have one entry per state".into()));
            }
        }
        if let Some(e) = &rewards.external {
            if e.intensity.len() != d || e.laws.len() != d {
                return Err(Error::Model(
                    "external intensity and laws must have one entry per state".into(),
                ));
            }
        }
        if bounds.lambda_bar.len() != d || bounds.beta_bar.len() != d {
            return Err(Error::Model("bounds must have one entry per state".into()));
        }
        initial.pmf(d)?;
        let mut outgoing = vec![Vec::new(); d];
        for (i, e) in rates.iter().enumerate() {
            outgoing[e.from].push(i);
        }
        Ok(ModelSpec {
            d,
            rates,
            rewards,
            initial,
            breakpoints,
            bounds,
            outgoing,
        })
    }

    /// Indices into `rates` of the edges leaving `x`.
    pub fn outgoing(&self, x: usize) -> &[usize] {
        &self.outgoing[x]
    }

    /// Total exit rate `lambda(t, x)`.
    pub fn exit_rate(&self, t: f64, x: usize) -> Result<f64> {
        let mut total = 0.0;
        for &i in &self.outgoing[x] {
            let e = &self.rates[i];
            total += e.rate.eval(t, e.from as f64)?;
        }
        Ok(total)
    }

    /// Expected lump-reward accrual rate
    /// `gamma(t, x) = sum_y Q(t,x,y) E G(t,x,y) + beta(t,x) E K(t,x)`.
    pub fn lump_accrual_rate(&self, t: f64, x: usize) -> Result<f64> {
        let mut total = 0.0;
        for &i in &self.outgoing[x] {
            let e = &self.rates[i];
            if let Some(law) = self.rewards.jump_rewards.get(&(e.from, e.to)) {
                total += e.rate.eval(t, e.from as f64)? * law.mean(t)?;
            }
        }
        if let Some(ext) = &self.rewards.external {
            let b = ext.intensity[x].eval(t, x as f64)?;
            if b != 0.0 {
                total += b * ext.laws[x].mean(t)?;
            }
        }
        Ok(total)
    }

    /// Initial pmf as a dense row vector.
    pub fn initial_pmf(&self) -> Vec<f64> {
        self.initial.pmf(self.d).expect("validated at construction")
    }

    /// Scheduled reward times inside `(0, horizon]`.
    pub fn scheduled_times(&self, horizon: f64) -> Vec<f64> {
        match &self.rewards.scheduled {
            Some(s) => s.times.times_within(horizon),
            None => Vec::new(),
        }
    }

    /// All declared breakpoints and scheduled times in `(0, horizon)`,
    /// sorted and distinct. Merging is idempotent: scheduled times already
    /// present are not duplicated.
    pub fn breakpoints_within(&self, horizon: f64) -> Vec<f64> {
        let mut pts = self.breakpoints.expand(horizon);
        for tf in self
            .rates
            .iter()
            .map(|e| &e.rate)
            .chain(self.rewards.rate_reward.iter())
        {
            append_fn_breakpoints(&mut pts, tf, horizon);
        }
        if let Some(ext) = &self.rewards.external {
            for tf in &ext.intensity {
                append_fn_breakpoints(&mut pts, tf, horizon);
            }
        }
        pts.extend(
            self.scheduled_times(horizon)
                .into_iter()
                .filter(|t| *t < horizon),
        );
        sort_dedup(&mut pts);
        pts
    }

    /// Breakpoints and scheduled times strictly inside `(a, b)`.
    pub fn breakpoints_between(&self, a: f64, b: f64) -> Vec<f64> {
        self.breakpoints_within(b)
            .into_iter()
            .filter(|p| *p > a)
            .collect()
    }

    /// Declared period of the rates and rewards, if any.
    pub fn period(&self) -> Option<f64> {
        self.breakpoints.period
    }

    /// Probe window used by the grid-based assumption checks.
    fn probe_window(&self) -> f64 {
        let mut w: f64 = 16.0;
        for p in &self.breakpoints.points {
            w = w.max(p + 1.0);
        }
        if let Some(p) = self.breakpoints.period {
            w = w.max(2.0 * p);
        }
        if let Some(s) = &self.rewards.scheduled {
            match &s.times {
                ScheduleSpec::Arithmetic { start, step } => w = w.max(start + 2.0 * step),
                ScheduleSpec::Explicit(times) => {
                    if let Some(last) = times.last() {
                        w = w.max(last + 1.0);
                    }
                }
            }
        }
        w
    }
}

fn append_fn_breakpoints(pts: &mut Vec<f64>, tf: &TimeFunction, horizon: f64) {
    if tf.breakpoints.is_empty() {
        return;
    }
    let set = BreakpointSet {
        points: if tf.period.is_none() {
            tf.breakpoints.clone()
        } else {
            Vec::new()
        },
        period: tf.period,
        period_points: if tf.period.is_some() {
            tf.breakpoints.clone()
        } else {
            Vec::new()
        },
    };
    pts.extend(set.expand(horizon));
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One line of a validation report.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate_model`]: one entry per assumption plus the
/// simulation-bound domination check.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Check the model assumptions on a probe grid of `probe_points` points
/// per unit time plus every declared breakpoint.
///
/// The boundedness and positivity conditions are stated as infima and
/// suprema over all times; a grid check is necessary but not sufficient.
/// Irreducibility is checked exactly on the sparsity graph.
pub fn validate_model(model: &ModelSpec, probe_points: usize) -> ValidationReport {
    let mut checks = Vec::new();
    let window = model.probe_window();
    let mut grid: Vec<f64> = Vec::new();
    let n = ((window * probe_points as f64).ceil() as usize).max(2);
    for i in 0..=n {
        grid.push(window * i as f64 / n as f64);
    }
    grid.extend(model.breakpoints_within(window));
    grid.extend(model.scheduled_times(window));
    sort_dedup(&mut grid);

    checks.push(check_evaluation(model, &grid));
    checks.push(check_irreducibility(model));
    checks.push(check_rate_bounds(model, &grid));
    checks.push(check_reward_bounds(model, &grid));
    checks.push(check_schedule(model));
    checks.push(check_sim_bounds(model, &grid));
    ValidationReport { checks }
}

fn pass(name: &str, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed: true,
        detail: detail.into(),
    }
}

fn fail(name: &str, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed: false,
        detail: detail.into(),
    }
}

fn check_evaluation(model: &ModelSpec, grid: &[f64]) -> Check {
    let name = "A1 evaluation";
    for e in &model.rates {
        for &t in grid {
            if let Err(err) = e.rate.eval(t, e.from as f64) {
                return fail(name, format!("rate {} -> {}: {err}", e.from, e.to));
            }
        }
    }
    for (x, r) in model.rewards.rate_reward.iter().enumerate() {
        for &t in grid {
            if let Err(err) = r.eval(t, x as f64) {
                return fail(name, format!("rate reward, state {x}: {err}"));
            }
        }
    }
    if let Some(ext) = &model.rewards.external {
        for (x, b) in ext.intensity.iter().enumerate() {
            for &t in grid {
                if let Err(err) = b.eval(t, x as f64) {
                    return fail(name, format!("external intensity, state {x}: {err}"));
                }
            }
        }
    }
    pass(name, format!("all expressions finite on {} probe points", grid.len()))
}

fn check_irreducibility(model: &ModelSpec) -> Check {
    let name = "A2 irreducibility";
    if model.d == 1 {
        return pass(name, "single state: vacuously irreducible");
    }
    let forward: Vec<Vec<usize>> = (0..model.d)
        .map(|x| model.outgoing(x).iter().map(|&i| model.rates[i].to).collect())
        .collect();
    let mut backward = vec![Vec::new(); model.d];
    for e in &model.rates {
        backward[e.to].push(e.from);
    }
    let reach = |adj: &Vec<Vec<usize>>| {
        let mut seen = vec![false; model.d];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    };
    let fwd = reach(&forward);
    let bwd = reach(&backward);
    match (0..model.d).find(|&x| !fwd[x] || !bwd[x]) {
        None => pass(name, "sparsity graph is strongly connected"),
        Some(x) => fail(name, format!("state {x} is not on a cycle through state 0")),
    }
}

fn check_rate_bounds(model: &ModelSpec, grid: &[f64]) -> Check {
    let name = "A3 rate bounds";
    if model.rates.is_empty() {
        return pass(name, "no rate entries: vacuous");
    }
    for e in &model.rates {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in grid {
            match e.rate.eval(t, e.from as f64) {
                Ok(v) => {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                Err(err) => return fail(name, format!("rate {} -> {}: {err}", e.from, e.to)),
            }
        }
        if !(lo > 0.0) {
            return fail(
                name,
                format!("rate {} -> {} reaches {lo:.3e} on the probe grid", e.from, e.to),
            );
        }
        if !hi.is_finite() {
            return fail(name, format!("rate {} -> {} is unbounded", e.from, e.to));
        }
    }
    pass(name, "all rates positive and finite on the probe grid")
}

fn check_reward_bounds(model: &ModelSpec, grid: &[f64]) -> Check {
    let name = "A4 reward bounds";
    for x in 0..model.d {
        for &t in grid {
            let r = match model.rewards.rate_reward[x].eval(t, x as f64) {
                Ok(v) => v,
                Err(err) => return fail(name, format!("rate reward, state {x}: {err}")),
            };
            if r < 0.0 {
                return fail(name, format!("rate reward negative ({r:.3e}) at state {x}, t={t}"));
            }
        }
    }
    // Support checks: every lump law lives on [0, c) for finite c.
    let mut laws: Vec<(&LumpDistribution, String)> = Vec::new();
    for (&(from, to), law) in &model.rewards.jump_rewards {
        laws.push((law, format!("jump law {from} -> {to}")));
    }
    if let Some(s) = &model.rewards.scheduled {
        for (x, law) in s.laws.iter().enumerate() {
            laws.push((law, format!("scheduled law, state {x}")));
        }
    }
    if let Some(e) = &model.rewards.external {
        for (x, law) in e.laws.iter().enumerate() {
            laws.push((law, format!("external law, state {x}")));
        }
    }
    for (law, label) in laws {
        for &t in grid {
            match (law.support_min(t), law.support_max(t)) {
                (Ok(lo), Ok(hi)) => {
                    if lo < 0.0 {
                        return fail(name, format!("{label}: support reaches {lo:.3e} < 0 at t={t}"));
                    }
                    if !hi.is_finite() {
                        return fail(name, format!("{label}: unbounded support at t={t}"));
                    }
                }
                (Err(err), _) | (_, Err(err)) => return fail(name, format!("{label}: {err}")),
            }
        }
    }
    if let Some(ext) = &model.rewards.external {
        for (x, b) in ext.intensity.iter().enumerate() {
            for &t in grid {
                match b.eval(t, x as f64) {
                    Ok(v) if v < 0.0 => {
                        return fail(name, format!("external intensity negative at state {x}, t={t}"))
                    }
                    Ok(_) => {}
                    Err(err) => return fail(name, format!("external intensity, state {x}: {err}")),
                }
            }
        }
    }
    pass(name, "rewards nonnegative and bounded; lump supports in [0, c)")
}

fn check_schedule(model: &ModelSpec) -> Check {
    let name = "A5 scheduled spacing";
    match &model.rewards.scheduled {
        None => pass(name, "no scheduled rewards: vacuous"),
        Some(s) => match s.times.validate() {
            Err(err) => fail(name, err.to_string()),
            Ok(()) => {
                let gap = s.times.min_gap();
                if gap > 0.0 {
                    pass(name, format!("minimum gap {gap}"))
                } else {
                    fail(name, "scheduled times have zero minimum gap")
                }
            }
        },
    }
}

fn check_sim_bounds(model: &ModelSpec, grid: &[f64]) -> Check {
    let name = "simulation bounds";
    for x in 0..model.d {
        for &t in grid {
            match model.exit_rate(t, x) {
                Ok(l) => {
                    if l > model.bounds.lambda_bar[x] * (1.0 + 1e-12) {
                        return fail(
                            name,
                            format!(
                                "lambda_bar[{x}] = {} < lambda({t}, {x}) = {l}",
                                model.bounds.lambda_bar[x]
                            ),
                        );
                    }
                }
                Err(err) => return fail(name, err.to_string()),
            }
            match model.rewards.beta(t, x) {
                Ok(b) => {
                    if b > model.bounds.beta_bar[x] * (1.0 + 1e-12) {
                        return fail(
                            name,
                            format!(
                                "beta_bar[{x}] = {} < beta({t}, {x}) = {b}",
                                model.bounds.beta_bar[x]
                            ),
                        );
                    }
                }
                Err(err) => return fail(name, err.to_string()),
            }
        }
    }
    pass(name, "declared bounds dominate rates on the probe grid")
}
