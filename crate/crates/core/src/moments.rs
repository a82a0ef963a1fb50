//! Backward ODE systems for the conditional mean `m(s, x)` of the
//! remaining reward, its second moment `v(s, x)`, and the variance
//! accumulator `V(s)`, stacked into one `(2d+1)`-dimensional solve.
//!
//! With terminal values zero at the horizon, integrating
//!
//! ```text
//! dm = r~ + Q m
//! dv = phi(m) + Q v
//! dV = mu phi(m) + mu Q v - 2 (mu m)(mu r~ + mu Q m)
//! ```
//!
//! right-to-left and applying scheduled-reward jumps at each `t_i` yields
//! `E R(t) = mu m(0)` and `Var R(t) = V(0)`. The direct `V` equation
//! exists because forming `mu v(0) - (mu m(0))^2` at the end cancels
//! catastrophically; the identity `V(s) = mu v(s) - (mu m(s))^2` is
//! maintained exactly along the solve, including through the jumps.

use crate::error::{Error, Result};
use crate::model::{LumpDistribution, ModelSpec};
use crate::ode::{integrate_backward, GridSolution, Segmentation, Side, SolverConfig};

/// Solution grids of the stacked system over `[start, horizon]`.
#[derive(Debug, Clone)]
pub struct MomentSolution {
    pub start: f64,
    pub horizon: f64,
    pub d: usize,
    /// Initial distribution used for the `V` component.
    pub mu: Vec<f64>,
    grid: GridSolution,
}

impl MomentSolution {
    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    /// `(m, v, V)` blocks of grid node `i`.
    pub fn node(&self, i: usize) -> (&[f64], &[f64], f64) {
        let y = self.grid.node(i);
        (&y[..self.d], &y[self.d..2 * self.d], y[2 * self.d])
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Conditional means `m(start, x)` of the reward over the window.
    pub fn m_start(&self) -> &[f64] {
        &self.grid.first_value()[..self.d]
    }

    /// Conditional second moments `v(start, x)`.
    pub fn v_start(&self) -> &[f64] {
        &self.grid.first_value()[self.d..2 * self.d]
    }

    /// `E R = mu m(start)`.
    pub fn expected_reward(&self) -> f64 {
        dot(&self.mu, self.m_start())
    }

    /// `Var R = V(start)` from the direct variance equation.
    pub fn variance(&self) -> f64 {
        self.grid.first_value()[2 * self.d]
    }

    /// The cancellation-prone route `mu v - (mu m)^2`, kept as a
    /// consistency check against [`Self::variance`].
    pub fn variance_by_difference(&self) -> f64 {
        let er = self.expected_reward();
        dot(&self.mu, self.v_start()) - er * er
    }

    /// Stacked solution value at an arbitrary time in the window.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        self.grid.value_at(t)
    }

    /// `m(t)` at an arbitrary time in the window.
    pub fn m_at(&self, t: f64) -> Vec<f64> {
        self.grid.value_at(t)[..self.d].to_vec()
    }

    pub fn grid(&self) -> &GridSolution {
        &self.grid
    }
}

/// Options for [`solve_moments_with`].
#[derive(Debug, Clone)]
pub struct MomentOptions {
    /// When false, declared breakpoints are ignored and only scheduled
    /// times segment the integration: the ablation baseline.
    pub discontinuity_aware: bool,
    /// Extra segment boundaries, so chosen times land exactly on grid
    /// nodes (the periodic pipeline pins its uniform grid this way).
    pub extra_boundaries: Vec<f64>,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            discontinuity_aware: true,
            extra_boundaries: Vec::new(),
        }
    }
}

/// Expected instantaneous reward accrual rate
/// `r~(t, x) = r(t, x) + gamma(t, x)`.
pub fn effective_rate(model: &ModelSpec, t: f64, x: usize) -> Result<f64> {
    Ok(model.rewards.rate_reward[x].eval(t, x as f64)? + model.lump_accrual_rate(t, x)?)
}

/// The second-moment source term `phi(t, x)` given the current mean block.
pub fn phi(model: &ModelSpec, t: f64, m_vec: &[f64]) -> Result<Vec<f64>> {
    let mut field = MomentField::new(model, &model.initial_pmf());
    field.eval_rates(t)?;
    field.phi_only(t, m_vec)
}

/// Solve the stacked system over `[0, horizon]` with the model's own
/// initial distribution.
pub fn solve_moments(
    model: &ModelSpec,
    horizon: f64,
    config: &SolverConfig,
) -> Result<MomentSolution> {
    solve_moments_with(model, horizon, config, &MomentOptions::default())
}

pub fn solve_moments_with(
    model: &ModelSpec,
    horizon: f64,
    config: &SolverConfig,
    options: &MomentOptions,
) -> Result<MomentSolution> {
    if !(horizon > 0.0) {
        return Err(Error::Model(format!("horizon must be positive, got {horizon}")));
    }
    solve_moments_window(model, 0.0, horizon, &model.initial_pmf(), config, options)
}

/// Solve over the window `[a, b]` with an explicit initial distribution:
/// the building block for resetting models and periodic constants.
pub fn solve_moments_window(
    model: &ModelSpec,
    a: f64,
    b: f64,
    mu: &[f64],
    config: &SolverConfig,
    options: &MomentOptions,
) -> Result<MomentSolution> {
    let d = model.d;
    assert_eq!(mu.len(), d);
    let scheduled: Vec<f64> = model
        .scheduled_times(b)
        .into_iter()
        .filter(|t| *t > a)
        .collect();
    let mut interior: Vec<f64> = scheduled.iter().copied().filter(|t| *t < b).collect();
    if options.discontinuity_aware {
        interior.extend(model.breakpoints_between(a, b));
    }
    interior.extend_from_slice(&options.extra_boundaries);
    let seg = Segmentation::new(a, b, &interior)?;

    let mut field = MomentField::new(model, mu);
    let mut terminal = vec![0.0; 2 * d + 1];
    if let Some(&last) = scheduled.last() {
        // A scheduled time sitting exactly at the horizon is collected in
        // R(b), so it seeds the terminal condition.
        if same_time(last, b) {
            apply_scheduled_jump(model, mu, b, &mut terminal)?;
        }
    }

    let grid = integrate_backward(
        |t, y, side, out| field.eval(t, y, side, out),
        &terminal,
        &seg,
        |t_i, y| {
            if scheduled.iter().any(|s| same_time(*s, t_i)) {
                apply_scheduled_jump(model, mu, t_i, y)?;
            }
            Ok(())
        },
        config,
    )?;

    Ok(MomentSolution {
        start: a,
        horizon: b,
        d,
        mu: mu.to_vec(),
        grid,
    })
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Boundary update at a scheduled time: with `h_x = E H(t_i, x)` and
/// `h~_x = E H^2(t_i, x) + 2 m(t_i+, x) h_x`,
///
/// ```text
/// V += mu h~ - (mu h)^2 - 2 (mu h)(mu m+)
/// v += h~
/// m += h
/// ```
///
/// The `V` update is the exact increment of `mu v - (mu m)^2`; dropping
/// the `2 (mu h)(mu m+)` cross term would make two deterministic
/// scheduled lumps report spurious variance.
fn apply_scheduled_jump(model: &ModelSpec, mu: &[f64], t_i: f64, y: &mut [f64]) -> Result<()> {
    let d = model.d;
    let laws = match &model.rewards.scheduled {
        Some(s) => &s.laws,
        None => return Ok(()),
    };
    let mut mu_h = 0.0;
    let mut mu_htilde = 0.0;
    let mut mu_m_plus = 0.0;
    let mut h = vec![0.0; d];
    let mut htilde = vec![0.0; d];
    for x in 0..d {
        let m_plus = y[x];
        h[x] = laws[x].mean(t_i)?;
        htilde[x] = laws[x].second_moment(t_i)? + 2.0 * m_plus * h[x];
        mu_h += mu[x] * h[x];
        mu_htilde += mu[x] * htilde[x];
        mu_m_plus += mu[x] * m_plus;
    }
    y[2 * d] += mu_htilde - mu_h * mu_h - 2.0 * mu_h * mu_m_plus;
    for x in 0..d {
        y[d + x] += htilde[x];
        y[x] += h[x];
    }
    Ok(())
}

/// Scratch space and cached per-edge lump laws for the stacked field.
struct MomentField<'m> {
    model: &'m ModelSpec,
    mu: Vec<f64>,
    edge_laws: Vec<Option<&'m LumpDistribution>>,
    rates: Vec<f64>,
    rtilde: Vec<f64>,
    phi: Vec<f64>,
    qm: Vec<f64>,
    qv: Vec<f64>,
}

impl<'m> MomentField<'m> {
    fn new(model: &'m ModelSpec, mu: &[f64]) -> Self {
        let edge_laws = model
            .rates
            .iter()
            .map(|e| model.rewards.jump_rewards.get(&(e.from, e.to)))
            .collect();
        let d = model.d;
        MomentField {
            model,
            mu: mu.to_vec(),
            edge_laws,
            rates: vec![0.0; model.rates.len()],
            rtilde: vec![0.0; d],
            phi: vec![0.0; d],
            qm: vec![0.0; d],
            qv: vec![0.0; d],
        }
    }

    fn eval_rates(&mut self, t: f64) -> Result<()> {
        for (i, e) in self.model.rates.iter().enumerate() {
            self.rates[i] = e.rate.eval(t, e.from as f64)?;
        }
        Ok(())
    }

    fn phi_only(&mut self, t: f64, m: &[f64]) -> Result<Vec<f64>> {
        let model = self.model;
        let d = model.d;
        let mut out = vec![0.0; d];
        for x in 0..d {
            out[x] = 2.0 * model.rewards.rate_reward[x].eval(t, x as f64)? * m[x];
        }
        for (i, e) in model.rates.iter().enumerate() {
            if let Some(law) = self.edge_laws[i] {
                let m1 = law.mean(t)?;
                let m2 = law.second_moment(t)?;
                out[e.from] += self.rates[i] * (m2 + 2.0 * m[e.to] * m1);
            }
        }
        if let Some(ext) = &model.rewards.external {
            for x in 0..d {
                let b = ext.intensity[x].eval(t, x as f64)?;
                if b != 0.0 {
                    let m1 = ext.laws[x].mean(t)?;
                    let m2 = ext.laws[x].second_moment(t)?;
                    out[x] += b * (m2 + 2.0 * m[x] * m1);
                }
            }
        }
        Ok(out)
    }

    fn eval(&mut self, t_raw: f64, y: &[f64], side: Side, out: &mut [f64]) -> Result<()> {
        let t = side.adjust(t_raw);
        let model = self.model;
        let d = model.d;
        let (m, rest) = y.split_at(d);
        let v = &rest[..d];
        self.eval_rates(t)?;
        for x in 0..d {
            self.rtilde[x] = model.rewards.rate_reward[x].eval(t, x as f64)?;
            self.phi[x] = 2.0 * self.rtilde[x] * m[x];
            self.qm[x] = 0.0;
            self.qv[x] = 0.0;
        }
        for (i, e) in model.rates.iter().enumerate() {
            let q = self.rates[i];
            self.qm[e.from] += q * (m[e.to] - m[e.from]);
            self.qv[e.from] += q * (v[e.to] - v[e.from]);
            if let Some(law) = self.edge_laws[i] {
                let m1 = law.mean(t)?;
                let m2 = law.second_moment(t)?;
                self.rtilde[e.from] += q * m1;
                self.phi[e.from] += q * (m2 + 2.0 * m[e.to] * m1);
            }
        }
        if let Some(ext) = &model.rewards.external {
            for x in 0..d {
                let b = ext.intensity[x].eval(t, x as f64)?;
                if b != 0.0 {
                    let m1 = ext.laws[x].mean(t)?;
                    let m2 = ext.laws[x].second_moment(t)?;
                    self.rtilde[x] += b * m1;
                    self.phi[x] += b * (m2 + 2.0 * m[x] * m1);
                }
            }
        }
        let mut mu_m = 0.0;
        let mut mu_dm = 0.0;
        let mut mu_dv = 0.0;
        for x in 0..d {
            out[x] = self.rtilde[x] + self.qm[x];
            out[d + x] = self.phi[x] + self.qv[x];
            mu_m += self.mu[x] * m[x];
            mu_dm += self.mu[x] * out[x];
            mu_dv += self.mu[x] * out[d + x];
        }
        out[2 * d] = mu_dv - 2.0 * mu_m * mu_dm;
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
