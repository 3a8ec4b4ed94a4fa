//! Special functions used across the crate.

/// Gamma function on the real line minus the non-positive integers.
///
/// Negative arguments go through the reflection formula on top of a Lanczos
/// approximation.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}
