//! Safeguarded Newton iteration on a sign-changing bracket.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Stop once `|f(x)| <= f_tol` and the Newton correction is below
    /// `x_tol·|x|`. Near a double root `|f|` alone says little about `x`.
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { f_tol: 1e-12, x_tol: 1e-14, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Finds a zero of `f` in `[a, b]` where `f(a)` and `f(b)` have opposite
/// signs. `f` returns the value and its derivative. Newton steps are taken
/// from `guess` (or the midpoint) and replaced by bisection whenever they
/// leave the current bracket or fail to halve the residual.
pub fn newton_bisect<F>(f: F, a: f64, b: f64, guess: Option<f64>, opts: RootOptions) -> Result<Root>
where
    F: Fn(f64) -> (f64, f64),
{
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0 });
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::RootNotConverged { iterations: 0, residual: fa.abs().min(fb.abs()) });
    }
    // Orient so that f(neg) < 0 < f(pos).
    let (mut neg, mut pos) = if fa < 0.0 { (a, b) } else { (b, a) };
    let mut x = guess.filter(|g| g.is_finite() && *g > a.min(b) && *g < a.max(b)).unwrap_or(0.5 * (a + b));
    let (mut fx, mut dfx) = f(x);
    let mut best = (x, fx);
    let mut last_abs = f64::INFINITY;

    for it in 0..opts.max_iter {
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        let step_small = dfx != 0.0 && (fx / dfx).abs() <= opts.x_tol * x.abs().max(f64::MIN_POSITIVE);
        if fx == 0.0 || (fx.abs() <= opts.f_tol && step_small) {
            return Ok(Root { x, fx, iterations: it });
        }
        if fx < 0.0 {
            neg = x;
        } else {
            pos = x;
        }
        let (lo, hi) = (neg.min(pos), neg.max(pos));
        let newton = if dfx != 0.0 { x - fx / dfx } else { f64::NAN };
        let bisect = 0.5 * (lo + hi);
        let inside = newton.is_finite() && newton > lo && newton < hi;
        let next = if inside && fx.abs() <= 0.5 * last_abs { newton } else { bisect };
        last_abs = fx.abs();
        if next == x || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
            // Bracket collapsed to adjacent floats.
            break;
        }
        x = next;
        (fx, dfx) = f(x);
    }
    if fx.abs() < best.1.abs() {
        best = (x, fx);
    }
    if best.1.abs() <= opts.f_tol {
        return Ok(Root { x: best.0, fx: best.1, iterations: opts.max_iter });
    }
    Err(Error::RootNotConverged { iterations: opts.max_iter, residual: best.1.abs() })
}

/// Golden-section search for the minimiser of a unimodal `f` on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
