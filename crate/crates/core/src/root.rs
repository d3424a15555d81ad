//! Scalar root finding on a sign-change bracket.
//!
//! Secant steps are taken while they stay well inside the bracket and keep it
//! shrinking; otherwise the step falls back to bisection. Iteration stops when
//! the residual is below `ftol` and the bracket is below `xtol`, or when the
//! bracket has collapsed to adjacent floating-point numbers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    pub ftol: f64,
    /// Relative bracket width required on top of the residual test.
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-12,
            xtol: 1e-14,
            max_iter: 200,
        }
    }
}

impl RootOptions {
    pub fn with_ftol(ftol: f64) -> Self {
        Self {
            ftol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &RootOptions,
    what: &'static str,
) -> Result<Root> {
    let fa = f(a);
    let fb = f(b);
    solve_from(f, (a, fa), (b, fb), opts, what)
}

/// Same as [`solve`] with the endpoint residuals already known.
pub fn solve_from<F: FnMut(f64) -> f64>(
    mut f: F,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    opts: &RootOptions,
    what: &'static str,
) -> Result<Root> {
    if a > b {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0 });
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoBracket {
            what,
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut widths = [b - a, b - a];
    for it in 1..=opts.max_iter {
        let width = b - a;
        let mid = a + 0.5 * width;
        let secant = b - fb * (b - a) / (fb - fa);
        let margin = 1e-3 * width;
        let stalled = width > 0.5 * widths[0];
        let x = if !stalled && secant > a + margin && secant < b - margin {
            secant
        } else {
            mid
        };
        if !(x > a && x < b) {
            // Bracket is two adjacent floats.
            return Ok(best(a, fa, b, fb, it));
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(Root { x, residual: 0.0, iterations: it });
        }
        if !fx.is_finite() {
            return Err(Error::NoConvergence {
                what,
                iterations: it,
                residual: fx,
            });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        widths = [widths[1], b - a];
        let r = best(a, fa, b, fb, it);
        let scale = r.x.abs().max(1.0);
        if r.residual.abs() <= opts.ftol && (b - a) <= opts.xtol * scale {
            return Ok(r);
        }
    }
    let r = best(a, fa, b, fb, opts.max_iter);
    if r.residual.abs() <= opts.ftol {
        return Ok(r);
    }
    Err(Error::NoConvergence {
        what,
        iterations: opts.max_iter,
        residual: r.residual,
    })
}

fn best(a: f64, fa: f64, b: f64, fb: f64, iterations: usize) -> Root {
    if fa.abs() <= fb.abs() {
        Root { x: a, residual: fa, iterations }
    } else {
        Root { x: b, residual: fb, iterations }
    }
}

/// Widens `[a, b]` until an increasing function changes sign on it.
/// Returns the bracket together with the endpoint residuals.
pub fn expand_increasing<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    what: &'static str,
) -> Result<((f64, f64), (f64, f64))> {
    let mut fa = f(a);
    let mut fb = f(b);
    let mut step = (b - a).max(1e-3);
    for _ in 0..60 {
        if fa <= 0.0 && fb >= 0.0 {
            return Ok(((a, fa), (b, fb)));
        }
        if fa > 0.0 {
            b = a;
            fb = fa;
            a -= step;
            fa = f(a);
        } else {
            a = b;
            fa = fb;
            b += step;
            fb = f(b);
        }
        step *= 2.0;
    }
    Err(Error::NoBracket {
        what,
        lo: a,
        hi: b,
        f_lo: fa,
        f_hi: fb,
    })
}

/// Summary of a function sampled on an even grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scan {
    pub sign_changes: usize,
    /// Smallest forward difference between consecutive samples.
    pub min_increment: f64,
}

pub fn scan<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, points: usize) -> Scan {
    assert!(points >= 2);
    let mut prev = f(a);
    let mut last_sign = (prev != 0.0).then(|| prev.signum());
    let mut changes = 0;
    let mut min_inc = f64::INFINITY;
    for i in 1..points {
        let x = a + (b - a) * i as f64 / (points - 1) as f64;
        let v = f(x);
        if v != 0.0 {
            if last_sign.is_some_and(|s| s != v.signum()) {
                changes += 1;
            }
            last_sign = Some(v.signum());
        }
        min_inc = min_inc.min(v - prev);
        prev = v;
    }
    Scan {
        sign_changes: changes,
        min_increment: min_inc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_quadratic() {
        // y = (1 - y)^2 / 2  ->  y = 2 - sqrt(3)
        let r = solve(|y| y - (1.0 - y).powi(2) / 2.0, 0.0, 1.0, &RootOptions::default(), "t").unwrap();
        assert!((r.x - (2.0 - 3f64.sqrt())).abs() < 1e-14);
        assert!(r.residual.abs() <= 1e-12);
    }

    #[test]
    fn flat_root_reaches_full_precision() {
        // Cubic tangency: residual tests alone would stop far from the root.
        let r = solve(|x: f64| (x - 0.3).powi(3), 0.0, 1.0, &RootOptions::default(), "t").unwrap();
        assert!((r.x - 0.3).abs() < 1e-5);
        let r = solve(|x: f64| (x - 0.3) * (x - 0.3).abs(), 0.0, 1.0, &RootOptions::default(), "t").unwrap();
        assert!((r.x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let e = solve(|x| x * x + 1.0, -1.0, 1.0, &RootOptions::default(), "t").unwrap_err();
        assert!(matches!(e, Error::NoBracket { .. }));
    }

    #[test]
    fn expands_to_find_bracket() {
        let ((a, fa), (b, fb)) = expand_increasing(|x| x - 40.0, 0.0, 1.0, "t").unwrap();
        assert!(a <= 40.0 && b >= 40.0 && fa <= 0.0 && fb >= 0.0);
        let ((a, _), (b, _)) = expand_increasing(|x| x + 7.5, 0.0, 1.0, "t").unwrap();
        assert!(a <= -7.5 && b >= -7.5);
    }

    #[test]
    fn scan_counts_sign_changes() {
        let s = scan(|x| x - 0.5, 0.0, 1.0, 101);
        assert_eq!(s.sign_changes, 1);
        assert!((s.min_increment - 0.01).abs() < 1e-12);
        let s = scan(|x| (x - 0.2) * (x - 0.75), 0.0, 1.0, 101);
        assert_eq!(s.sign_changes, 2);
        assert!(s.min_increment < 0.0);
    }
}
