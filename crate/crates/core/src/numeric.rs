//! Small numerical building blocks: bounded scalar minimization and
//! finite-difference derivatives.

use crate::error::{ModelError, Result};

const GOLDEN_RATIO: f64 = 0.618_033_988_749_894_9;
const MAX_GOLDEN_ITERS: usize = 500;

/// Minimize `f` on `[lo, hi]` to absolute tolerance `x_tol` on the argument.
///
/// A coarse scan with `n_scan` points localizes the global minimum on the
/// interval (the objective need not be unimodal there), then golden-section
/// search refines the bracket around the best scan point.
///
/// Returns `(x_min, f(x_min))`.
pub fn minimize_scalar<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    n_scan: usize,
    x_tol: f64,
) -> Result<(f64, f64)> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ModelError::InvalidParameter(format!(
            "minimize_scalar: bad interval [{lo}, {hi}]"
        )));
    }
    if !(x_tol > 0.0) || n_scan < 3 {
        return Err(ModelError::InvalidParameter(
            "minimize_scalar: need x_tol > 0 and n_scan >= 3".into(),
        ));
    }

    let step = (hi - lo) / (n_scan - 1) as f64;
    let mut best_i = 0;
    let mut best_f = f64::INFINITY;
    for i in 0..n_scan {
        let x = lo + step * i as f64;
        let fx = f(x);
        if !fx.is_finite() {
            return Err(ModelError::NonConvergence(format!(
                "minimize_scalar: objective not finite at x = {x}"
            )));
        }
        if fx < best_f {
            best_f = fx;
            best_i = i;
        }
    }

    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);

    let mut x1 = b - GOLDEN_RATIO * (b - a);
    let mut x2 = a + GOLDEN_RATIO * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while b - a > x_tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN_RATIO * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN_RATIO * (b - a);
            f2 = f(x2);
        }
        iters += 1;
        if iters > MAX_GOLDEN_ITERS {
            return Err(ModelError::NonConvergence(format!(
                "minimize_scalar: no convergence to {x_tol} after {MAX_GOLDEN_ITERS} iterations"
            )));
        }
    }

    let xm = 0.5 * (a + b);
    Ok((xm, f(xm)))
}

/// Three-point central second derivative of `f` at `x0` with step `h`.
pub fn second_derivative<F: Fn(f64) -> f64>(f: F, x0: f64, h: f64) -> f64 {
    (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h)
}

/// Central first derivative of `f` at `x0` with step `h`.
pub fn central_derivative<F: Fn(f64) -> f64>(f: F, x0: f64, h: f64) -> f64 {
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        // the argument is only resolvable to ~sqrt(eps) by value comparison,
        // but the minimum value itself is accurate to machine precision
        let (x, fx) = minimize_scalar(|x| (x - 0.3).powi(2) + 1.0, -1.0, 1.0, 16, 1e-12).unwrap();
        assert!((x - 0.3).abs() < 1e-6, "x = {x}");
        assert!((fx - 1.0).abs() < 1e-14);
    }

    #[test]
    fn handles_minimum_near_interval_edge() {
        // cos has its minimum at +/- pi; the scan must localize it even though
        // the function is not unimodal over the full interval.
        let (x, _) = minimize_scalar(|x| x.cos(), -std::f64::consts::PI, std::f64::consts::PI, 64, 1e-12)
            .unwrap();
        assert!((x.abs() - std::f64::consts::PI).abs() < 1e-6, "x = {x}");
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(minimize_scalar(|x| x, 1.0, -1.0, 8, 1e-9).is_err());
        assert!(minimize_scalar(|x| x, -1.0, 1.0, 8, 0.0).is_err());
    }

    #[test]
    fn second_derivative_of_cosine() {
        // d2/dx2 cos(x) = -cos(x)
        let d2 = second_derivative(|x| x.cos(), 0.4, 1e-4);
        assert!((d2 + 0.4_f64.cos()).abs() < 1e-7);
    }
}
