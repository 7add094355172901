//! Safeguarded Newton iteration on a sign-changing bracket.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("bracket [{lo}, {hi}] does not change sign (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("no convergence after {iterations} iterations (last x = {last_x})")]
    IterationLimit { iterations: usize, last_x: f64 },
}

/// Find a root of `f` in `[lo, hi]` given its derivative `df`.
///
/// Newton steps are taken while they stay inside the current bracket and
/// shrink it fast enough; otherwise the step falls back to bisection, so
/// convergence is guaranteed whenever the endpoints differ in sign.
pub fn newton_bisect<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, max_iter: usize) -> Result<f64, RootError>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(RootError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    // orient so that f(lo) < 0 < f(hi)
    let increasing = f_lo < 0.0;
    let mut x = 0.5 * (lo + hi);
    let mut last_width = hi - lo;
    for _ in 0..max_iter {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let width = hi - lo;
        if width <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let d = df(x);
        let newton = x - fx / d;
        let take_newton = d.is_finite() && d != 0.0 && newton > lo && newton < hi && width < 0.5 * last_width;
        last_width = width;
        let next = if take_newton { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(RootError::IterationLimit { iterations: max_iter, last_x: x })
}

/// Plain bisection for a function with no usable derivative.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, max_iter: usize) -> Result<f64, RootError> {
    newton_bisect(&f, |_| f64::NAN, lo, hi, max_iter)
}

/// Minimise a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
