//! Discontinuity-aware integration of vector ODEs.
//!
//! The problem data here is smooth only between declared breakpoints, so
//! every solve runs over a [`Segmentation`] whose boundaries include all
//! breakpoints and scheduled times. Within a segment the field is smooth;
//! segment boundaries are never stepped over, and the field callback
//! receives a [`Side`] marker so it can evaluate the correct one-sided
//! limit at the edges.
//!
//! Backward solves follow the reward-system convention: the field is the
//! derivative with respect to *decreasing* time, `f(t, y) = -dy/dt`, and
//! a jump callback is applied once at each interior boundary after the
//! segment to its right has been integrated.

use crate::error::{Error, Result};

/// Which one-sided limit of the field applies at an evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Left-continuous limit (evaluation at a segment's right endpoint).
    Left,
    /// Two-sided (interior) evaluation.
    Interior,
    /// Right-continuous limit (evaluation at a segment's left endpoint).
    Right,
}

impl Side {
    /// Nudge `t` into the segment interior so that expressions built from
    /// `floor`/`min`/`max` evaluate to the intended one-sided limit.
    ///
    /// The offset is a few dozen ulps; the perturbation this feeds into a
    /// stage value is far below solver tolerances.
    pub fn adjust(self, t: f64) -> f64 {
        let delta = 64.0 * f64::EPSILON * t.abs().max(1.0);
        match self {
            Side::Left => t - delta,
            Side::Interior => t,
            Side::Right => t + delta,
        }
    }
}

/// Integration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk2,
    Rk4,
    Dopri54,
}

/// Solver settings. `h` drives the fixed-step methods; `rtol`/`atol`/
/// `h_max` drive the adaptive one.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub h: f64,
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Store the quartic interpolants of accepted Dormand-Prince steps so
    /// the solution can be queried between grid points.
    pub dense_output: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Dopri54,
            h: 1e-2,
            rtol: 1e-9,
            atol: 1e-12,
            h_max: 1.0,
            dense_output: false,
        }
    }
}

impl SolverConfig {
    pub fn fixed(method: Method, h: f64) -> Self {
        SolverConfig {
            method,
            h,
            ..SolverConfig::default()
        }
    }

    pub fn dopri(rtol: f64, atol: f64) -> Self {
        SolverConfig {
            method: Method::Dopri54,
            rtol,
            atol,
            ..SolverConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::Solver("step size h must be positive".into()));
        }
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(Error::Solver("rtol and atol must be positive".into()));
        }
        if !(self.h_max > 0.0) {
            return Err(Error::Solver("h_max must be positive".into()));
        }
        Ok(())
    }
}

/// A partition of `[start, end]` whose interior points are the declared
/// breakpoints and scheduled times.
#[derive(Debug, Clone)]
pub struct Segmentation {
    boundaries: Vec<f64>,
}

impl Segmentation {
    /// Build from interior points; points outside `(start, end)` are
    /// dropped, duplicates merged.
    pub fn new(start: f64, end: f64, interior: &[f64]) -> Result<Self> {
        if !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Solver(format!(
                "segmentation needs start < end, got [{start}, {end}]"
            )));
        }
        let mut boundaries = vec![start];
        let mut pts: Vec<f64> = interior
            .iter()
            .copied()
            .filter(|p| *p > start && *p < end)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        boundaries.extend(pts);
        boundaries.push(end);
        Ok(Segmentation { boundaries })
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn num_segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Substep count and exact substep size per segment for nominal step
    /// `h`: `N_i = ceil(len_i / h)`, `h_i = len_i / N_i`, so the substeps
    /// tile each segment exactly.
    pub fn substeps(&self, h: f64) -> Vec<(usize, f64)> {
        self.boundaries
            .windows(2)
            .map(|w| {
                let len = w[1] - w[0];
                let n = (len / h).ceil().max(1.0) as usize;
                (n, len / n as f64)
            })
            .collect()
    }
}

/// A solved trajectory on the segmentation grid, stored in ascending time
/// order. At a boundary carrying a jump the grid holds two nodes: first
/// the post-jump (left-limit) value, then the pre-jump value belonging to
/// the segment on the right.
#[derive(Debug, Clone)]
pub struct GridSolution {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    segments: Vec<SegmentNodes>,
}

#[derive(Debug, Clone)]
struct SegmentNodes {
    lo: f64,
    /// Inclusive node index range in the ascending arrays.
    first: usize,
    last: usize,
    dense: Vec<DenseStep>,
}

#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    /// Five stacked coefficient vectors of the quartic interpolant.
    rcont: Vec<f64>,
}

impl GridSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at the earliest grid time.
    pub fn first_value(&self) -> &[f64] {
        self.node(0)
    }

    /// Value at the latest grid time.
    pub fn last_value(&self) -> &[f64] {
        self.node(self.times.len() - 1)
    }

    /// Evaluate the solution at `t` (left-continuous at jump boundaries).
    ///
    /// Dormand-Prince solutions evaluate their stored step interpolants;
    /// fixed-step solutions interpolate through the four nearest grid
    /// nodes of the enclosing segment.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.value_at_into(t, &mut out);
        out
    }

    pub fn value_at_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let seg = self.locate_segment(t);
        let seg = &self.segments[seg];
        if !seg.dense.is_empty() {
            // t in (step.lo, step.hi]; steps tile the segment and are
            // stored ascending by low end.
            let idx = seg
                .dense
                .partition_point(|s| s.t0.min(s.t0 + s.h) < t)
                .saturating_sub(1)
                .min(seg.dense.len() - 1);
            let step = &seg.dense[idx];
            let theta = ((t - step.t0) / step.h).clamp(0.0, 1.0);
            let d = self.dim;
            for i in 0..d {
                let c0 = step.rcont[i];
                let c1 = step.rcont[d + i];
                let c2 = step.rcont[2 * d + i];
                let c3 = step.rcont[3 * d + i];
                let c4 = step.rcont[4 * d + i];
                out[i] = c0 + theta * (c1 + (1.0 - theta) * (c2 + theta * (c3 + (1.0 - theta) * c4)));
            }
            return;
        }
        // Exact node hit?
        for j in seg.first..=seg.last {
            if self.times[j] == t {
                out.copy_from_slice(self.node(j));
                return;
            }
        }
        // Four-point Lagrange within the segment.
        let mut k = seg.first;
        while k < seg.last && self.times[k + 1] < t {
            k += 1;
        }
        let lo = k.saturating_sub(1).max(seg.first);
        let hi = (lo + 3).min(seg.last);
        let lo = hi.saturating_sub(3).max(seg.first);
        out.fill(0.0);
        for j in lo..=hi {
            let mut w = 1.0;
            for l in lo..=hi {
                if l != j {
                    w *= (t - self.times[l]) / (self.times[j] - self.times[l]);
                }
            }
            let node = self.node(j);
            for i in 0..self.dim {
                out[i] += w * node[i];
            }
        }
    }

    fn locate_segment(&self, t: f64) -> usize {
        // Segment k covers (lo_k, hi_k]; clamp outside queries.
        let n = self.segments.len();
        let idx = self.segments.partition_point(|s| s.lo < t);
        idx.saturating_sub(1).min(n - 1)
    }
}

/// Integrate `f(t, y) = -dy/dt` from the segmentation's end down to its
/// start, beginning at `terminal`, applying `jumps` once at each interior
/// boundary (after the segment to its right).
pub fn integrate_backward<F, J>(
    mut field: F,
    terminal: &[f64],
    seg: &Segmentation,
    mut jumps: J,
    config: &SolverConfig,
) -> Result<GridSolution>
where
    F: FnMut(f64, &[f64], Side, &mut [f64]) -> Result<()>,
    J: FnMut(f64, &mut [f64]) -> Result<()>,
{
    config.validate()?;
    let dim = terminal.len();
    // The engine integrates dy/dt = g with g = -f.
    let mut g = |t: f64, y: &[f64], side: Side, out: &mut [f64]| -> Result<()> {
        field(t, y, side, out)?;
        for v in out.iter_mut() {
            *v = -*v;
        }
        Ok(())
    };

    let nseg = seg.num_segments();
    let substeps = seg.substeps(config.h);
    let mut y = terminal.to_vec();
    // Per segment, nodes in descending time order.
    let mut seg_nodes: Vec<(Vec<f64>, Vec<f64>, Vec<DenseStep>)> = Vec::with_capacity(nseg);

    for i in (0..nseg).rev() {
        let lo = seg.boundaries()[i];
        let hi = seg.boundaries()[i + 1];
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut dense = Vec::new();
        match config.method {
            Method::Dopri54 => {
                dopri_segment(&mut g, &mut y, hi, lo, config, &mut times, &mut values, &mut dense)?;
            }
            _ => {
                let (n, h_i) = substeps[i];
                fixed_segment(
                    &mut g,
                    &mut y,
                    hi,
                    lo,
                    n,
                    -h_i,
                    config.method,
                    &mut times,
                    &mut values,
                )?;
            }
        }
        seg_nodes.push((times, values, dense));
        if i > 0 {
            jumps(lo, &mut y)?;
        }
    }

    assemble(dim, seg, seg_nodes, true, config.dense_output)
}

/// Integrate `dy/dt = f(t, y)` forward from the segmentation's start,
/// beginning at `initial`. Forward solves carry no boundary jumps.
pub fn integrate_forward<F>(
    mut field: F,
    initial: &[f64],
    seg: &Segmentation,
    config: &SolverConfig,
) -> Result<GridSolution>
where
    F: FnMut(f64, &[f64], Side, &mut [f64]) -> Result<()>,
{
    config.validate()?;
    let dim = initial.len();
    let nseg = seg.num_segments();
    let substeps = seg.substeps(config.h);
    let mut y = initial.to_vec();
    let mut seg_nodes: Vec<(Vec<f64>, Vec<f64>, Vec<DenseStep>)> = Vec::with_capacity(nseg);

    for i in 0..nseg {
        let lo = seg.boundaries()[i];
        let hi = seg.boundaries()[i + 1];
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut dense = Vec::new();
        match config.method {
            Method::Dopri54 => {
                dopri_segment(&mut field, &mut y, lo, hi, config, &mut times, &mut values, &mut dense)?;
            }
            _ => {
                let (n, h_i) = substeps[i];
                fixed_segment(
                    &mut field,
                    &mut y,
                    lo,
                    hi,
                    n,
                    h_i,
                    config.method,
                    &mut times,
                    &mut values,
                )?;
            }
        }
        seg_nodes.push((times, values, dense));
    }

    assemble(dim, seg, seg_nodes, false, config.dense_output)
}

fn assemble(
    dim: usize,
    seg: &Segmentation,
    mut seg_nodes: Vec<(Vec<f64>, Vec<f64>, Vec<DenseStep>)>,
    backward: bool,
    keep_dense: bool,
) -> Result<GridSolution> {
    // Backward sweeps produced segments in descending order with nodes in
    // descending time; flip both so everything ascends.
    if backward {
        seg_nodes.reverse();
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut segments = Vec::new();
    for (k, (mut t, mut v, mut dense)) in seg_nodes.into_iter().enumerate() {
        if backward {
            t.reverse();
            let n = t.len();
            let mut flipped = vec![0.0; n * dim];
            for j in 0..n {
                flipped[j * dim..(j + 1) * dim]
                    .copy_from_slice(&v[(n - 1 - j) * dim..(n - j) * dim]);
            }
            v = flipped;
            dense.reverse();
        }
        let first = times.len();
        times.extend_from_slice(&t);
        values.extend_from_slice(&v);
        let last = times.len() - 1;
        segments.push(SegmentNodes {
            lo: seg.boundaries()[k],
            first,
            last,
            dense: if keep_dense { dense } else { Vec::new() },
        });
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver("non-finite value in solution grid".into()));
    }
    Ok(GridSolution {
        dim,
        times,
        values,
        segments,
    })
}

/// Side marker for a stage evaluated at `u` inside segment `[lo, hi]`.
fn side_at(u: f64, lo: f64, hi: f64) -> Side {
    if u == hi {
        Side::Left
    } else if u == lo {
        Side::Right
    } else {
        Side::Interior
    }
}

#[allow(clippy::too_many_arguments)]
fn fixed_segment<G>(
    g: &mut G,
    y: &mut [f64],
    entry: f64,
    exit: f64,
    n: usize,
    h: f64,
    method: Method,
    times: &mut Vec<f64>,
    values: &mut Vec<f64>,
) -> Result<()>
where
    G: FnMut(f64, &[f64], Side, &mut [f64]) -> Result<()>,
{
    let dim = y.len();
    let (lo, hi) = if entry < exit { (entry, exit) } else { (exit, entry) };
    let span = exit - entry;
    times.push(entry);
    values.extend_from_slice(y);
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    for step in 0..n {
        let t0 = entry + span * (step as f64 / n as f64);
        let t1 = if step + 1 == n {
            exit
        } else {
            entry + span * ((step + 1) as f64 / n as f64)
        };
        let tm = t0 + 0.5 * h;
        match method {
            Method::Euler => {
                g(t0, y, side_at(t0, lo, hi), &mut k1)?;
                for i in 0..dim {
                    y[i] += h * k1[i];
                }
            }
            Method::Rk2 => {
                g(t0, y, side_at(t0, lo, hi), &mut k1)?;
                for i in 0..dim {
                    stage[i] = y[i] + 0.5 * h * k1[i];
                }
                g(tm, &stage, Side::Interior, &mut k2)?;
                for i in 0..dim {
                    y[i] += h * k2[i];
                }
            }
            Method::Rk4 => {
                g(t0, y, side_at(t0, lo, hi), &mut k1)?;
                for i in 0..dim {
                    stage[i] = y[i] + 0.5 * h * k1[i];
                }
                g(tm, &stage, Side::Interior, &mut k2)?;
                for i in 0..dim {
                    stage[i] = y[i] + 0.5 * h * k2[i];
                }
                g(tm, &stage, Side::Interior, &mut k3)?;
                for i in 0..dim {
                    stage[i] = y[i] + h * k3[i];
                }
                g(t1, &stage, side_at(t1, lo, hi), &mut k4)?;
                for i in 0..dim {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            Method::Dopri54 => unreachable!("adaptive method handled separately"),
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Solver(format!("non-finite field value near t = {t1}")));
        }
        times.push(t1);
        values.extend_from_slice(y);
    }
    Ok(())
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[allow(clippy::too_many_arguments)]
fn dopri_segment<G>(
    g: &mut G,
    y: &mut [f64],
    entry: f64,
    exit: f64,
    config: &SolverConfig,
    times: &mut Vec<f64>,
    values: &mut Vec<f64>,
    dense: &mut Vec<DenseStep>,
) -> Result<()>
where
    G: FnMut(f64, &[f64], Side, &mut [f64]) -> Result<()>,
{
    let dim = y.len();
    let (lo, hi) = if entry < exit { (entry, exit) } else { (exit, entry) };
    let seg_len = hi - lo;
    let dir = if exit > entry { 1.0 } else { -1.0 };
    times.push(entry);
    values.extend_from_slice(y);

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut t = entry;
    let mut h = dir * config.h_max.min(seg_len);
    g(t, y, side_at(t, lo, hi), &mut k[0])?;

    while t != exit {
        let remaining = exit - t;
        let mut landing = false;
        if h.abs() >= remaining.abs() {
            h = remaining;
            landing = true;
        }
        if h.abs() < 1e-14 * seg_len {
            return Err(Error::Solver(format!(
                "step size underflow at t = {t} (h = {h:.3e})"
            )));
        }
        // Stages 2..=6.
        for s in 1..6 {
            let ts = t + C[s] * h;
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                stage[i] = y[i] + h * acc;
            }
            let (ks_pre, ks_post) = k.split_at_mut(s);
            let _ = ks_pre;
            g(ts, &stage, side_at(ts, lo, hi), &mut ks_post[0])?;
        }
        // Fifth-order solution (row 6 of A), then the FSAL stage at t + h.
        let t1 = if landing { exit } else { t + h };
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..6 {
                let a = A[5][j];
                if a != 0.0 {
                    acc += a * k[j][i];
                }
            }
            y_new[i] = y[i] + h * acc;
        }
        g(t1, &y_new, side_at(t1, lo, hi), &mut k[6])?;

        // Mixed-norm error estimate.
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += E[j] * kj[i];
                }
            }
            e *= h;
            let scale = config.atol + config.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Solver(format!("non-finite field value near t = {t}")));
        }
        let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);

        if err <= 1.0 {
            if config.dense_output {
                let mut rcont = vec![0.0; 5 * dim];
                for i in 0..dim {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    rcont[i] = y[i];
                    rcont[dim + i] = ydiff;
                    rcont[2 * dim + i] = bspl;
                    rcont[3 * dim + i] = ydiff - h * k[6][i] - bspl;
                    let mut dsum = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        if D[j] != 0.0 {
                            dsum += D[j] * kj[i];
                        }
                    }
                    rcont[4 * dim + i] = h * dsum;
                }
                dense.push(DenseStep { t0: t, h, rcont });
            }
            y.copy_from_slice(&y_new);
            k.swap(0, 6); // FSAL
            t = t1;
            times.push(t);
            values.extend_from_slice(y);
            h = dir * (h.abs() * factor).min(config.h_max);
        } else {
            h *= factor;
        }
    }
    Ok(())
}
