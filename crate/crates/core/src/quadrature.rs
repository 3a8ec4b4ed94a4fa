//! Double-exponential quadrature for integrands with endpoint singularities.
//!
//! Used to tabulate jump intensities for the Monte Carlo oracle and to check
//! closed-form Lévy exponents against their defining integrals.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

const MAX_LEVEL: usize = 10;
const T_MAX: f64 = 6.5;

/// Tanh-sinh rule on `[a, b]`.
///
/// The closure receives `(x, distance_to_nearest_endpoint)` so that
/// integrands singular at an endpoint can be evaluated without cancellation.
pub fn tanh_sinh<F>(a: f64, b: f64, tol: f64, f: F) -> Complex64
where
    F: Fn(f64, f64) -> Complex64,
{
    let half = 0.5 * (b - a);
    let node = |t: f64| -> Complex64 {
        let s = FRAC_PI_2 * t.sinh();
        let cs = s.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cs * cs);
        // distance from the nearer endpoint: half * (1 - tanh|s|)
        let e = (-2.0 * s.abs()).exp();
        let dist = half * 2.0 * e / (1.0 + e);
        if dist <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let x = if s < 0.0 { a + dist } else { b - dist };
        let v = f(x, dist) * w;
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    refine(node, tol)
}

/// Exp-sinh rule on `[a, inf)`; the closure receives `(x, x - a)`.
pub fn exp_sinh<F>(a: f64, tol: f64, f: F) -> Complex64
where
    F: Fn(f64, f64) -> Complex64,
{
    let node = |t: f64| -> Complex64 {
        let s = FRAC_PI_2 * t.sinh();
        let d = s.exp();
        if d == 0.0 || !d.is_finite() {
            return Complex64::new(0.0, 0.0);
        }
        let w = FRAC_PI_2 * t.cosh() * d;
        let v = f(a + d, d) * w;
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    refine(node, tol)
}

/// Real-valued convenience wrapper around [`exp_sinh`].
pub fn exp_sinh_real<F>(a: f64, tol: f64, f: F) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    exp_sinh(a, tol, |x, d| Complex64::new(f(x, d), 0.0)).re
}

/// Real-valued convenience wrapper around [`tanh_sinh`].
pub fn tanh_sinh_real<F>(a: f64, b: f64, tol: f64, f: F) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    tanh_sinh(a, b, tol, |x, d| Complex64::new(f(x, d), 0.0)).re
}

fn refine<N>(node: N, tol: f64) -> Complex64
where
    N: Fn(f64) -> Complex64,
{
    let mut h = 0.5;
    let n0 = (T_MAX / h) as i64;
    let mut sum = node(0.0);
    for k in 1..=n0 {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
    }
    let mut estimate = sum * h;
    for _ in 1..MAX_LEVEL {
        h *= 0.5;
        let n = (T_MAX / h) as i64;
        // new nodes are the odd multiples of the halved step
        let mut k = 1;
        while k <= n {
            let t = k as f64 * h;
            sum += node(t) + node(-t);
            k += 2;
        }
        let next = sum * h;
        let diff = (next - estimate).norm();
        estimate = next;
        if diff <= tol * estimate.norm().max(1e-300) {
            break;
        }
    }
    estimate
}

/// `e^w - 1 - w` without cancellation for small `|w|`.
pub fn expm1_minus_linear(w: Complex64) -> Complex64 {
    if w.norm() < 0.5 {
        let mut term = w * w * 0.5;
        let mut sum = term;
        let mut k = 3.0;
        while term.norm() > 1e-18 * sum.norm() {
            term = term * w / k;
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        w.exp() - 1.0 - w
    }
}

/// `e^w - 1` without cancellation for small `|w|`.
pub fn expm1(w: Complex64) -> Complex64 {
    if w.norm() < 0.5 {
        w + expm1_minus_linear(w)
    } else {
        w.exp() - 1.0
    }
}
