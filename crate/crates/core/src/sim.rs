//! Exact-in-law simulation of the jump process and its reward functional.
//!
//! State jumps are generated by per-state thinning: from state `x`,
//! exponential proposals at the dominating rate `lambda_bar[x]` are
//! accepted with probability `lambda(tau, x) / lambda_bar[x]`, and an
//! accepted proposal moves to `y` with probability `Q(tau,x,y) /
//! lambda(tau,x)`. External Poisson events are thinned the same way at
//! `beta_bar[x]`, generated retrospectively over each constant-state
//! interval so the modulating state is fixed.
//!
//! Reproducibility contract: path `i` draws from a substream derived from
//! `(seed, i)` alone, so results are bit-identical for any worker count.
//! Within a path the draw order is: initial state, then jump proposals
//! interleaved with per-interval external thinning (in time order), then
//! the reward draws — jump lumps in jump order, external lumps in event
//! order, scheduled lumps in schedule order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::quad;

/// Seed material for reproducible path ensembles.
#[derive(Debug, Clone, Copy)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec { seed }
    }

    /// Independent substream for one path index.
    pub fn substream(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index.wrapping_add(1));
        rng
    }
}

/// One simulated trajectory over `[start, horizon]`, right-continuous.
#[derive(Debug, Clone)]
pub struct Path {
    pub start: f64,
    pub horizon: f64,
    pub initial_state: usize,
    /// Jump times with post-jump states.
    pub jumps: Vec<(f64, usize)>,
    /// External event times with the state occupied at the event.
    pub external: Vec<(f64, usize)>,
}

impl Path {
    /// State occupied at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        match self.jumps.partition_point(|&(tj, _)| tj <= t) {
            0 => self.initial_state,
            k => self.jumps[k - 1].1,
        }
    }

    /// Constant-state intervals `(a, b, state)` covering `[start, horizon)`.
    pub fn intervals(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut t = self.start;
        let mut x = self.initial_state;
        for &(tj, y) in &self.jumps {
            out.push((t, tj, x));
            t = tj;
            x = y;
        }
        out.push((t, self.horizon, x));
        out
    }
}

/// A realized reward with its four components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    pub total: f64,
    pub integrated: f64,
    pub jump: f64,
    pub scheduled: f64,
    pub external: f64,
}

/// Simulate one path over `[0, horizon]`, drawing the initial state from
/// the model's initial distribution.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &ModelSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<Path> {
    let x0 = model.initial.sample(model.d, rng)?;
    simulate_path_from(model, 0.0, horizon, x0, rng)
}

/// Simulate one path over `[a, b]` starting in `x0`.
pub fn simulate_path_from<R: Rng + ?Sized>(
    model: &ModelSpec,
    a: f64,
    b: f64,
    x0: usize,
    rng: &mut R,
) -> Result<Path> {
    let mut jumps = Vec::new();
    let mut external = Vec::new();
    let mut rates = vec![0.0; model.rates.len().max(1)];
    let mut t = a;
    let mut x = x0;
    let mut interval_start = a;
    loop {
        let lambda_bar = model.bounds.lambda_bar[x];
        let proposal = if lambda_bar > 0.0 {
            t + Exp::new(lambda_bar)
                .map_err(|e| Error::Model(format!("bad lambda_bar: {e}")))?
                .sample(rng)
        } else {
            f64::INFINITY
        };
        if proposal >= b {
            thin_external(model, interval_start, b, x, rng, &mut external)?;
            break;
        }
        t = proposal;
        let mut lambda = 0.0;
        for &i in model.outgoing(x) {
            let e = &model.rates[i];
            let q = e.rate.eval(t, e.from as f64)?;
            rates[i] = q;
            lambda += q;
        }
        if lambda > lambda_bar * (1.0 + 1e-9) {
            return Err(Error::Bound(format!(
                "lambda({t}, {x}) = {lambda} exceeds lambda_bar[{x}] = {lambda_bar}"
            )));
        }
        debug_assert!(lambda / lambda_bar <= 1.0 + 1e-9);
        if rng.random::<f64>() * lambda_bar < lambda {
            // Accepted: close the constant-state interval, generate its
            // external events, then move.
            thin_external(model, interval_start, t, x, rng, &mut external)?;
            let mut pick = rng.random::<f64>() * lambda;
            let mut next = x;
            for &i in model.outgoing(x) {
                pick -= rates[i];
                if pick <= 0.0 {
                    next = model.rates[i].to;
                    break;
                }
            }
            if next == x {
                // Roundoff pushed the scan past the last edge.
                next = model.rates[*model.outgoing(x).last().unwrap()].to;
            }
            jumps.push((t, next));
            x = next;
            interval_start = t;
        }
    }
    Ok(Path {
        start: a,
        horizon: b,
        initial_state: x0,
        jumps,
        external,
    })
}

fn thin_external<R: Rng + ?Sized>(
    model: &ModelSpec,
    a: f64,
    b: f64,
    x: usize,
    rng: &mut R,
    out: &mut Vec<(f64, usize)>,
) -> Result<()> {
    let ext = match &model.rewards.external {
        Some(e) => e,
        None => return Ok(()),
    };
    let beta_bar = model.bounds.beta_bar[x];
    if beta_bar <= 0.0 {
        return Ok(());
    }
    let exp = Exp::new(beta_bar).map_err(|e| Error::Model(format!("bad beta_bar: {e}")))?;
    let mut s = a;
    loop {
        s += exp.sample(rng);
        if s >= b {
            return Ok(());
        }
        let beta = ext.intensity[x].eval(s, x as f64)?;
        if beta > beta_bar * (1.0 + 1e-9) {
            return Err(Error::Bound(format!(
                "beta({s}, {x}) = {beta} exceeds beta_bar[{x}] = {beta_bar}"
            )));
        }
        if rng.random::<f64>() * beta_bar < beta {
            out.push((s, x));
        }
    }
}

/// Precomputed schedule and breakpoint data for repeated accumulation.
pub struct RewardAccumulator<'m> {
    model: &'m ModelSpec,
    breakpoints: Vec<f64>,
    scheduled: Vec<f64>,
    quad_tol: f64,
}

impl<'m> RewardAccumulator<'m> {
    pub fn new(model: &'m ModelSpec, horizon: f64) -> Self {
        RewardAccumulator {
            model,
            breakpoints: model.breakpoints_within(horizon),
            scheduled: model.scheduled_times(horizon),
            quad_tol: 1e-10,
        }
    }

    /// Realize the reward of `path`, sampling lump laws from `rng`.
    pub fn accumulate<R: Rng + ?Sized>(&self, path: &Path, rng: &mut R) -> Result<RewardSample> {
        let model = self.model;
        let mut integrated = 0.0;
        for (a, b, x) in path.intervals() {
            if b > a {
                let r = &model.rewards.rate_reward[x];
                integrated += quad::integrate_with_breakpoints(
                    |t| r.eval(t, x as f64),
                    a,
                    b,
                    self.quad_tol,
                    &self.breakpoints,
                )?;
            }
        }
        let mut jump = 0.0;
        let mut prev = path.initial_state;
        for &(tj, y) in &path.jumps {
            if let Some(law) = model.rewards.jump_rewards.get(&(prev, y)) {
                jump += law.sample(tj, rng)?;
            }
            prev = y;
        }
        let mut external = 0.0;
        if let Some(ext) = &model.rewards.external {
            for &(s, x) in &path.external {
                external += ext.laws[x].sample(s, rng)?;
            }
        }
        let mut scheduled = 0.0;
        if let Some(sch) = &model.rewards.scheduled {
            for &ti in &self.scheduled {
                if ti > path.start && ti <= path.horizon {
                    let x = path.state_at(ti);
                    scheduled += sch.laws[x].sample(ti, rng)?;
                }
            }
        }
        Ok(RewardSample {
            total: integrated + jump + scheduled + external,
            integrated,
            jump,
            scheduled,
            external,
        })
    }
}

/// Realize the reward of one path (convenience wrapper; the Monte Carlo
/// harness reuses a single [`RewardAccumulator`] instead).
pub fn accumulate_reward<R: Rng + ?Sized>(
    model: &ModelSpec,
    path: &Path,
    rng: &mut R,
) -> Result<RewardSample> {
    RewardAccumulator::new(model, path.horizon).accumulate(path, rng)
}

/// Empirical CDF value at one query point with a binomial confidence
/// interval.
#[derive(Debug, Clone, Copy)]
pub struct EcdfPoint {
    pub z: f64,
    pub coverage: f64,
    pub ci_halfwidth: f64,
}

/// Ensemble summary: sample moments with standard errors, the per-path
/// rewards (in path-index order), and empirical CDF values.
#[derive(Debug, Clone)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Standard error of the sample variance via the fourth-moment
    /// formula `Var(S^2) = (m4 - s^4 (n-3)/(n-1)) / n`.
    pub se_variance: f64,
    pub ecdf: Vec<EcdfPoint>,
    pub samples: Vec<RewardSample>,
}

impl SampleStats {
    pub fn from_samples(samples: Vec<RewardSample>, query_points: &[f64]) -> Self {
        let n = samples.len();
        let nf = n as f64;
        let mean = samples.iter().map(|s| s.total).sum::<f64>() / nf;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for s in &samples {
            let d = s.total - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        m2 /= nf;
        m4 /= nf;
        let variance = m2 * nf / (nf - 1.0);
        let se_mean = (variance / nf).sqrt();
        let se_variance = ((m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf)
            .max(0.0)
            .sqrt();
        let ecdf = query_points
            .iter()
            .map(|&z| {
                let hits = samples.iter().filter(|s| s.total <= z).count();
                let coverage = hits as f64 / nf;
                EcdfPoint {
                    z,
                    coverage,
                    ci_halfwidth: 1.96 * (coverage * (1.0 - coverage) / nf).sqrt(),
                }
            })
            .collect();
        SampleStats {
            n,
            mean,
            variance,
            se_mean,
            se_variance,
            ecdf,
            samples,
        }
    }
}

fn run_paths<F>(n_paths: usize, workers: usize, job: F) -> Result<Vec<RewardSample>>
where
    F: Fn(usize) -> Result<RewardSample> + Sync,
{
    if workers == 1 {
        (0..n_paths).map(&job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Model(format!("worker pool: {e}")))?;
        pool.install(|| (0..n_paths).into_par_iter().map(&job).collect())
    }
}

/// Estimate the law of `R(horizon)` from `n_paths` independent paths.
///
/// Deterministic given `(seed, n_paths)` for any `workers` value
/// (`workers = 0` uses all available parallelism).
pub fn monte_carlo(
    model: &ModelSpec,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    workers: usize,
    query_points: &[f64],
) -> Result<SampleStats> {
    if n_paths < 2 {
        return Err(Error::Model("need at least 2 paths".into()));
    }
    let spec = RngSpec::new(seed);
    let acc = RewardAccumulator::new(model, horizon);
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        workers
    };
    let samples = run_paths(n_paths, workers, |i| {
        let mut rng = spec.substream(i as u64);
        let path = simulate_path(model, horizon, &mut rng)?;
        acc.accumulate(&path, &mut rng)
    })?;
    Ok(SampleStats::from_samples(samples, query_points))
}

/// Monte Carlo for the resetting model: the state is redrawn from
/// `reset_laws` at each integer time (cycling when fewer laws than
/// periods are given); rewards accumulate across resets unchanged.
pub fn monte_carlo_resetting(
    model: &ModelSpec,
    reset_laws: &[crate::model::InitialDistribution],
    periods: usize,
    n_paths: usize,
    seed: u64,
    workers: usize,
    query_points: &[f64],
) -> Result<SampleStats> {
    if n_paths < 2 {
        return Err(Error::Model("need at least 2 paths".into()));
    }
    if reset_laws.is_empty() || periods == 0 {
        return Err(Error::Model("need at least one reset law and one period".into()));
    }
    let spec = RngSpec::new(seed);
    let accs: Vec<RewardAccumulator> = (0..periods)
        .map(|_| RewardAccumulator::new(model, periods as f64))
        .collect();
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        workers
    };
    let samples = run_paths(n_paths, workers, |i| {
        let mut rng = spec.substream(i as u64);
        let mut total = RewardSample {
            total: 0.0,
            integrated: 0.0,
            jump: 0.0,
            scheduled: 0.0,
            external: 0.0,
        };
        for p in 0..periods {
            let law = &reset_laws[p % reset_laws.len()];
            let x0 = law.sample(model.d, &mut rng)?;
            let path = simulate_path_from(model, p as f64, (p + 1) as f64, x0, &mut rng)?;
            let r = accs[p].accumulate(&path, &mut rng)?;
            total.total += r.total;
            total.integrated += r.integrated;
            total.jump += r.jump;
            total.scheduled += r.scheduled;
            total.external += r.external;
        }
        Ok(total)
    })?;
    Ok(SampleStats::from_samples(samples, query_points))
}
