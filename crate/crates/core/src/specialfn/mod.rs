//! Special functions and quadrature shared by the numeric modules.

pub mod bessel;
pub mod quad;

pub use bessel::{bessel_k, bessel_k_scaled};
pub use quad::{gaussian_expectation, integrate, integrate_fourier, Domain, Estimate, QuadratureSpec, Scheme, Trig};

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};

/// Radial generating function of the Student-t law,
/// `g_ν(s) = (√(νs))^{ν/2} K_{ν/2}(√(νs)) / (2^{ν/2-1} Γ(ν/2))`.
///
/// `g_ν(u²)` is the characteristic function of `t_ν` at `u`; `g_ν(0) = 1`.
pub fn radial_generator(nu: f64, s: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(domain(format!("degrees of freedom must be positive, got {nu}")));
    }
    if !(s >= 0.0) {
        return Err(domain(format!("radial argument must be non-negative, got {s}")));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    if s.is_infinite() {
        return Ok(0.0);
    }
    let z = (nu * s).sqrt();
    let half = 0.5 * nu;
    let log_norm = (half - 1.0) * std::f64::consts::LN_2 + ln_gamma(half);
    let log_g = half * z.ln() + bessel_k_scaled(half, z)?.ln() - z - log_norm;
    Ok(log_g.exp().min(1.0))
}

/// `∫_ℝ f` split at the sorted, de-duplicated `anchors` so that each piece
/// sees a single bulk of mass.
pub fn integrate_split<F: Fn(f64) -> f64 + ?Sized>(f: &F, anchors: &[f64], spec: &QuadratureSpec) -> Result<Estimate> {
    let mut points: Vec<f64> = anchors.iter().copied().filter(|a| a.is_finite()).collect();
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    if points.is_empty() {
        return integrate(f, Domain::Line, spec);
    }
    let mut pieces = vec![Domain::Lower(points[0])];
    pieces.extend(points.windows(2).map(|w| Domain::Interval(w[0], w[1])));
    pieces.push(Domain::Upper(points[points.len() - 1]));
    let mut total = Estimate { value: 0.0, error: 0.0, evaluations: 0 };
    for piece in pieces {
        let est = integrate(f, piece, spec)?;
        total.value += est.value;
        total.error += est.error;
        total.evaluations += est.evaluations;
    }
    Ok(total)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}
