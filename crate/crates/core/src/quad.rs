//! Adaptive Simpson quadrature with forced panel boundaries.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 64;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(a, b, fa, fm, fb);
    recurse(&mut f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Integrate `f` over `[a, b]`, splitting first at every point of the
/// sorted slice `breakpoints` that falls strictly inside the interval.
///
/// Integrands here are smooth between declared breakpoints, so forcing
/// panel boundaries there keeps Simpson's rule at full order.
pub fn integrate_with_breakpoints<F>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    breakpoints: &[f64],
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    debug_assert!(a < b);
    let lo = breakpoints.partition_point(|&p| p <= a);
    let hi = breakpoints.partition_point(|&p| p < b);
    let mut total = 0.0;
    let mut left = a;
    let per_panel_tol = tol / (hi.saturating_sub(lo) + 1) as f64;
    for &p in &breakpoints[lo..hi] {
        if p > left {
            total += adaptive_simpson(&mut f, left, p, per_panel_tol)?;
            left = p;
        }
    }
    total += adaptive_simpson(&mut f, left, b, per_panel_tol)?;
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    if !(a < m && m < b) {
        // Interval too narrow to subdivide; its contribution is at the
        // roundoff floor already.
        return Ok(whole);
    }
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // The width floor matters when a jump sits an ulp or two away from
    // its declared breakpoint (1/7 is not representable): the residual of
    // chasing it halves in lockstep with the tolerance, but the absolute
    // error left behind is jump * width, already at roundoff scale here.
    if delta.abs() <= 15.0 * tol
        || (b - a) <= 32.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0)
    {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "adaptive Simpson failed to converge on [{a}, {b}] (residual {:.3e})",
            delta.abs()
        )));
    }
    let half_tol = 0.5 * tol;
    Ok(recurse(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(|u| Ok(u * u * u - 2.0 * u), 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_integrand() {
        let v = adaptive_simpson(|u| Ok((10.0 * u).sin()), 0.0, 1.0, 1e-12).unwrap();
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn breakpoints_restore_accuracy_for_kinks() {
        // |u - 1/3| has a kink; a forced boundary there keeps full order.
        let f = |u: f64| Ok((u - 1.0 / 3.0).abs());
        let exact = (1.0 / 3.0f64).powi(2) / 2.0 + (2.0 / 3.0f64).powi(2) / 2.0;
        let v = integrate_with_breakpoints(f, 0.0, 1.0, 1e-13, &[1.0 / 3.0]).unwrap();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_outside_interval_are_ignored() {
        let v = integrate_with_breakpoints(|_| Ok(1.0), 2.0, 3.0, 1e-12, &[0.5, 1.0, 5.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn error_propagates() {
        let r = adaptive_simpson(|u| crate::expr::parse("1/t").unwrap().eval(u, 0.0), -1.0, 1.0, 1e-9);
        assert!(r.is_err());
    }
}
