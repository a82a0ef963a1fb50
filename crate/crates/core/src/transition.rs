//! Transition matrices `P(s, t)` of the jump process.
//!
//! The general route integrates the matrix-valued forward equation
//! `dP/du = P Q(u)` over the model's segmentation; one solve yields
//! `P(s, u)` for every grid time `u`, which the weak-ergodicity profile
//! reuses. Closed forms are available for the two-state switching model
//! and for the Prendiville process built from it.

use crate::error::{Error, Result};
use crate::expr::TimeFunction;
use crate::model::ModelSpec;
use crate::ode::{integrate_forward, GridSolution, Segmentation, Side, SolverConfig};
use crate::quad;

/// A row-stochastic transition matrix between two times.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub s: f64,
    pub t: f64,
    pub d: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Validate row sums within 1e-9 and clamp entries from
    /// `[-1e-12, 1 + 1e-12]` onto `[0, 1]`.
    pub fn from_raw(s: f64, t: f64, d: usize, mut entries: Vec<f64>) -> Result<Self> {
        assert_eq!(entries.len(), d * d);
        for v in &mut entries {
            if *v < -1e-12 || *v > 1.0 + 1e-12 {
                return Err(Error::Solver(format!(
                    "transition entry {v} outside [0, 1] beyond tolerance"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        for x in 0..d {
            let sum: f64 = entries[x * d..(x + 1) * d].iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Solver(format!(
                    "transition row {x} sums to {sum} (tolerance 1e-9)"
                )));
            }
        }
        Ok(TransitionMatrix { s, t, d, entries })
    }

    pub fn identity(s: f64, d: usize) -> Self {
        let mut entries = vec![0.0; d * d];
        for x in 0..d {
            entries[x * d + x] = 1.0;
        }
        TransitionMatrix {
            s,
            t: s,
            d,
            entries,
        }
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.d..(x + 1) * self.d]
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.d + y]
    }

    /// `self * other` (matrix product), for Chapman-Kolmogorov checks.
    pub fn compose(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let d = self.d;
        let mut entries = vec![0.0; d * d];
        for x in 0..d {
            for z in 0..d {
                let pxz = self.entries[x * d + z];
                if pxz == 0.0 {
                    continue;
                }
                for y in 0..d {
                    entries[x * d + y] += pxz * other.entries[z * d + y];
                }
            }
        }
        TransitionMatrix {
            s: self.s,
            t: other.t,
            d,
            entries,
        }
    }
}

/// Evaluate all edge rates at one (side-adjusted) time.
pub(crate) struct RateScratch {
    pub rates: Vec<f64>,
}

impl RateScratch {
    pub fn new(model: &ModelSpec) -> Self {
        RateScratch {
            rates: vec![0.0; model.rates.len()],
        }
    }

    pub fn eval(&mut self, model: &ModelSpec, t: f64, side: Side) -> Result<()> {
        let t = side.adjust(t);
        for (i, e) in model.rates.iter().enumerate() {
            self.rates[i] = e.rate.eval(t, e.from as f64)?;
        }
        Ok(())
    }
}

/// Solve the forward equation from `u = s` (identity) to `u = t` and keep
/// the whole grid; the final node is `P(s, t)`.
pub fn transition_grid(
    model: &ModelSpec,
    s: f64,
    t: f64,
    config: &SolverConfig,
    extra_boundaries: &[f64],
) -> Result<GridSolution> {
    let d = model.d;
    let mut interior = model.breakpoints_between(s, t);
    interior.extend_from_slice(extra_boundaries);
    let seg = Segmentation::new(s, t, &interior)?;
    let mut scratch = RateScratch::new(model);
    let mut initial = vec![0.0; d * d];
    for x in 0..d {
        initial[x * d + x] = 1.0;
    }
    integrate_forward(
        |u, p, side, out| {
            scratch.eval(model, u, side)?;
            for row in 0..d {
                let p_row = &p[row * d..(row + 1) * d];
                let out_row = &mut out[row * d..(row + 1) * d];
                out_row.fill(0.0);
                for (i, e) in model.rates.iter().enumerate() {
                    let flux = p_row[e.from] * scratch.rates[i];
                    out_row[e.to] += flux;
                    out_row[e.from] -= flux;
                }
            }
            Ok(())
        },
        &initial,
        &seg,
        config,
    )
}

/// Numerical `P(s, t)` via the Kolmogorov forward equation.
pub fn transition_matrix(
    model: &ModelSpec,
    s: f64,
    t: f64,
    config: &SolverConfig,
) -> Result<TransitionMatrix> {
    if !(0.0 <= s && s <= t) {
        return Err(Error::Model(format!("need 0 <= s <= t, got s={s}, t={t}")));
    }
    if s == t {
        return Ok(TransitionMatrix::identity(s, model.d));
    }
    let grid = transition_grid(model, s, t, config, &[])?;
    TransitionMatrix::from_raw(s, t, model.d, grid.last_value().to_vec())
}

fn quad_breakpoints(lambda: &TimeFunction, mu: &TimeFunction, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    for tf in [lambda, mu] {
        match tf.period {
            None => pts.extend(tf.breakpoints.iter().filter(|p| **p > lo && **p < hi)),
            Some(p) => {
                let mut k = (lo / p).floor().max(0.0);
                loop {
                    let base = k * p;
                    if base > hi {
                        break;
                    }
                    for &off in &tf.breakpoints {
                        let t = base + off;
                        if t > lo && t < hi {
                            pts.push(t);
                        }
                    }
                    k += 1.0;
                }
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    pts
}

/// Occupancy probabilities of the two-state switching model with up-rate
/// `lambda` (0 -> 1) and down-rate `mu` (1 -> 0), via quadrature:
///
/// `p01 = ∫_s^t exp(-A(u,t)) lambda(u) du`, `p11 = exp(-A(s,t)) + p01`,
/// with `A(u, t) = ∫_u^t (lambda + mu)`. Returns the full 2x2 matrix
/// `[[1-p01, p01], [1-p11, p11]]`.
pub fn two_state_closed_form(
    lambda: &TimeFunction,
    mu: &TimeFunction,
    s: f64,
    t: f64,
    quad_tol: f64,
) -> Result<TransitionMatrix> {
    if !(0.0 <= s && s <= t) {
        return Err(Error::Model(format!("need 0 <= s <= t, got s={s}, t={t}")));
    }
    if s == t {
        return Ok(TransitionMatrix::identity(s, 2));
    }
    let bps = quad_breakpoints(lambda, mu, s, t);
    let total = |u: f64| -> Result<f64> { Ok(lambda.eval(u, 0.0)? + mu.eval(u, 0.0)?) };
    // A(u, t); the integrand below stays bounded because the exponent is
    // nonpositive, so large horizons cannot overflow.
    let a_to_t = |u: f64| -> Result<f64> {
        quad::integrate_with_breakpoints(total, u, t, quad_tol * 0.1, &bps)
    };
    let p01 = quad::integrate_with_breakpoints(
        |u| Ok((-a_to_t(u)?).exp() * lambda.eval(u, 0.0)?),
        s,
        t,
        quad_tol,
        &bps,
    )?;
    let p11 = (-a_to_t(s)?).exp() + p01;
    TransitionMatrix::from_raw(
        s,
        t,
        2,
        vec![1.0 - p01, p01, 1.0 - p11, p11],
    )
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    // Direct evaluation; n stays small for ensemble models.
    let mut coef = 1.0;
    for (k, slot) in pmf.iter_mut().enumerate() {
        *slot = coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        coef = coef * (n - k) as f64 / (k + 1) as f64;
    }
    pmf
}

/// Closed-form transition row of the Prendiville process: starting from
/// `x` of the `d-1` independent switching particles in state 1, the count
/// at `t` is `Binom(d-1-x, p01) + Binom(x, p11)`.
pub fn prendiville_closed_form(
    d: usize,
    lambda: &TimeFunction,
    mu: &TimeFunction,
    s: f64,
    t: f64,
    x: usize,
) -> Result<Vec<f64>> {
    if d == 0 || x > d - 1 {
        return Err(Error::Model(format!("state {x} out of range for d={d}")));
    }
    if s == t {
        let mut pmf = vec![0.0; d];
        pmf[x] = 1.0;
        return Ok(pmf);
    }
    let two = two_state_closed_form(lambda, mu, s, t, 1e-12)?;
    let p01 = two.entry(0, 1);
    let p11 = two.entry(1, 1);
    let up = binomial_pmf(d - 1 - x, p01);
    let stay = binomial_pmf(x, p11);
    let mut pmf = vec![0.0; d];
    for (i, a) in up.iter().enumerate() {
        for (j, b) in stay.iter().enumerate() {
            pmf[i + j] += a * b;
        }
    }
    Ok(pmf)
}

/// Weak-ergodicity diagnostic: the worst-case total-variation distance
/// between rows of `P(s, s+u)` at `u = step, 2 step, ..., u_max`.
pub fn mixing_profile(
    model: &ModelSpec,
    s: f64,
    u_max: f64,
    step: f64,
    config: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0) || !(u_max >= step) {
        return Err(Error::Model("need step > 0 and u_max >= step".into()));
    }
    let d = model.d;
    let n = (u_max / step).floor() as usize;
    let queries: Vec<f64> = (1..=n).map(|k| s + step * k as f64).collect();
    if d == 1 {
        return Ok(queries.iter().map(|&u| (u - s, 0.0)).collect());
    }
    let grid = transition_grid(model, s, s + u_max, config, &queries)?;
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; d * d];
    for &u in &queries {
        grid.value_at_into(u, &mut buf);
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in (a + 1)..d {
                let tv: f64 = (0..d)
                    .map(|z| (buf[a * d + z] - buf[b * d + z]).abs())
                    .sum();
                worst = worst.max(tv);
            }
        }
        out.push((u - s, worst));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BreakpointSet, InitialDistribution, ModelSpec, RateEntry, RewardSpec, SimBounds,
    };
    use crate::ode::Method;

    fn two_state_model(up: f64, down: f64) -> ModelSpec {
        ModelSpec::new(
            2,
            vec![
                RateEntry {
                    from: 0,
                    to: 1,
                    rate: TimeFunction::constant(up),
                },
                RateEntry {
                    from: 1,
                    to: 0,
                    rate: TimeFunction::constant(down),
                },
            ],
            RewardSpec::zero(2),
            InitialDistribution::Point(0),
            BreakpointSet::default(),
            SimBounds {
                lambda_bar: vec![up, down],
                beta_bar: vec![0.0, 0.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_at_equal_times() {
        let model = two_state_model(1.0, 1.0);
        let p = transition_matrix(&model, 2.0, 2.0, &SolverConfig::default()).unwrap();
        assert_eq!(p.entry(0, 0), 1.0);
        assert_eq!(p.entry(0, 1), 0.0);
    }

    #[test]
    fn symmetric_two_state_analytic() {
        let model = two_state_model(1.0, 1.0);
        let tau = 0.5 * 2.0f64.ln();
        let p = transition_matrix(&model, 0.0, tau, &SolverConfig::dopri(1e-11, 1e-13)).unwrap();
        // off-diagonal (1 - e^{-2 tau}) / 2 = 0.25
        assert!((p.entry(0, 1) - 0.25).abs() < 1e-9);
        assert!((p.entry(0, 0) - 0.75).abs() < 1e-9);
        assert!((p.entry(1, 0) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn closed_form_matches_symmetric_constants() {
        let tau = 0.5 * 2.0f64.ln();
        let lam = TimeFunction::constant(1.0);
        let mu = TimeFunction::constant(1.0);
        let p = two_state_closed_form(&lam, &mu, 0.0, tau, 1e-12).unwrap();
        assert!((p.entry(0, 1) - 0.25).abs() < 1e-10);
        assert!((p.entry(1, 1) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn closed_form_matches_numerical_asymmetric() {
        // Asymmetric rates distinguish the binomial-mixture reading of
        // p01/p11 from other pairings of the quadrature formulas.
        let lam = TimeFunction::parse("2 + 0.25*sin(t)").unwrap();
        let mu = TimeFunction::parse("1 + 0.5*cos(2*t)").unwrap();
        let model = ModelSpec::new(
            2,
            vec![
                RateEntry {
                    from: 0,
                    to: 1,
                    rate: lam.clone(),
                },
                RateEntry {
                    from: 1,
                    to: 0,
                    rate: mu.clone(),
                },
            ],
            RewardSpec::zero(2),
            InitialDistribution::Point(0),
            BreakpointSet::default(),
            SimBounds {
                lambda_bar: vec![2.25, 1.5],
                beta_bar: vec![0.0, 0.0],
            },
        )
        .unwrap();
        for (s, t) in [(0.0, 0.7), (0.3, 1.9), (1.0, 1.05)] {
            let numeric = transition_matrix(&model, s, t, &SolverConfig::dopri(1e-11, 1e-13)).unwrap();
            let closed = two_state_closed_form(&lam, &mu, s, t, 1e-12).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    assert!(
                        (numeric.entry(x, y) - closed.entry(x, y)).abs() < 1e-8,
                        "mismatch at ({s},{t}) entry ({x},{y}): {} vs {}",
                        numeric.entry(x, y),
                        closed.entry(x, y)
                    );
                }
            }
        }
    }

    #[test]
    fn tiny_up_rate_limit() {
        let lam = TimeFunction::constant(1e-6);
        let mu = TimeFunction::constant(1.0);
        let p = two_state_closed_form(&lam, &mu, 0.0, 10.0, 1e-12).unwrap();
        // p01 ~ lambda/(lambda+mu) (1 - e^{-10}) which is just under 1e-6
        assert!(p.entry(0, 1) > 0.0 && p.entry(0, 1) < 1.1e-6);
        let model = two_state_model(1e-6, 1.0);
        let numeric = transition_matrix(&model, 0.0, 10.0, &SolverConfig::dopri(1e-12, 1e-14)).unwrap();
        assert!((numeric.entry(0, 1) - p.entry(0, 1)).abs() < 1e-8);
    }

    #[test]
    fn prendiville_point_mass_at_equal_times() {
        let lam = TimeFunction::constant(1.0);
        let mu = TimeFunction::constant(1.0);
        let pmf = prendiville_closed_form(11, &lam, &mu, 1.0, 1.0, 4).unwrap();
        assert_eq!(pmf[4], 1.0);
        assert_eq!(pmf.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn prendiville_binomial_row() {
        // From x = 0 the count is Binom(10, p01); with p01 = 0.25 the mass
        // at 0 is 0.75^10.
        let tau = 0.5 * 2.0f64.ln();
        let lam = TimeFunction::constant(1.0);
        let mu = TimeFunction::constant(1.0);
        let pmf = prendiville_closed_form(11, &lam, &mu, 0.0, tau, 0).unwrap();
        assert!((pmf[0] - 0.75f64.powi(10)).abs() < 1e-10);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_with_kinked_rates() {
        // A sawtooth up-rate has kinks at multiples of 1/2; the declared
        // breakpoints steer both the quadrature panels and the ODE
        // segmentation.
        let mut lam = TimeFunction::parse("1 + (2*t - floor(2*t))").unwrap();
        lam.breakpoints = vec![0.5];
        lam.period = Some(0.5);
        let mu = TimeFunction::constant(2.0);
        let model = ModelSpec::new(
            2,
            vec![
                RateEntry {
                    from: 0,
                    to: 1,
                    rate: lam.clone(),
                },
                RateEntry {
                    from: 1,
                    to: 0,
                    rate: mu.clone(),
                },
            ],
            RewardSpec::zero(2),
            InitialDistribution::Point(0),
            BreakpointSet::default(),
            SimBounds {
                lambda_bar: vec![2.0, 2.0],
                beta_bar: vec![0.0, 0.0],
            },
        )
        .unwrap();
        // The per-function breakpoints surface on the model too.
        let pts = model.breakpoints_within(2.0);
        assert_eq!(pts.len(), 3);
        for (s, t) in [(0.0, 1.3), (0.2, 0.9), (0.7, 2.4)] {
            let closed = two_state_closed_form(&lam, &mu, s, t, 1e-12).unwrap();
            let numeric =
                transition_matrix(&model, s, t, &SolverConfig::dopri(1e-11, 1e-13)).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    assert!(
                        (closed.entry(x, y) - numeric.entry(x, y)).abs() < 1e-8,
                        "({s},{t}) entry ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let model = two_state_model(2.0, 1.0);
        let config = SolverConfig::dopri(1e-11, 1e-13);
        let p1 = transition_matrix(&model, 0.2, 0.9, &config).unwrap();
        let p2 = transition_matrix(&model, 0.9, 1.7, &config).unwrap();
        let direct = transition_matrix(&model, 0.2, 1.7, &config).unwrap();
        let composed = p1.compose(&p2);
        for x in 0..2 {
            for y in 0..2 {
                assert!((composed.entry(x, y) - direct.entry(x, y)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn mixing_profile_matches_two_state_decay() {
        let model = two_state_model(1.0, 1.0);
        let prof = mixing_profile(&model, 0.0, 2.0, 0.5, &SolverConfig::dopri(1e-10, 1e-12)).unwrap();
        for &(u, tv) in &prof {
            assert!((tv - 2.0 * (-2.0 * u).exp()).abs() < 1e-6, "u={u} tv={tv}");
        }
        // at u = 1: 2 e^{-2} = 0.270671
        let at1 = prof.iter().find(|(u, _)| (*u - 1.0).abs() < 1e-12).unwrap();
        assert!((at1.1 - 0.270671).abs() < 1e-5);
        assert!(prof.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-8));
    }

    #[test]
    fn fixed_step_forward_is_row_stochastic() {
        let model = two_state_model(2.0, 3.0);
        let p = transition_matrix(&model, 0.0, 1.0, &SolverConfig::fixed(Method::Rk4, 1e-3)).unwrap();
        for x in 0..2 {
            let sum: f64 = p.row(x).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
