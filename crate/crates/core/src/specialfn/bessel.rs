//! Modified Bessel function of the second kind for real order.
//!
//! Half-integer orders use the closed form of `K_{1/2}` and upward
//! recurrence. Other orders use Temme's series for `x < 2` and Steed's
//! continued fraction above, both evaluated at `|μ| ≤ 1/2` and carried to
//! the requested order by the (stable) forward recurrence.

use std::f64::consts::PI;

use crate::error::{domain, Result};

const EPS: f64 = 1e-16;
const SPLIT: f64 = 2.0;
const MAX_ITER: usize = 10_000;

// Coefficients of 1/Γ(1+z) = Σ a_j z^j (|z| ≤ 1/2).
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

pub(crate) fn recip_gamma_1p(z: f64) -> f64 {
    RECIP_GAMMA.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// Γ1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ) and Γ2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2.
fn temme_gammas(mu: f64) -> (f64, f64) {
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pow = 1.0;
    for (j, &c) in RECIP_GAMMA.iter().enumerate() {
        if j % 2 == 0 {
            gam2 += c * pow;
        } else {
            gam1 -= c * pow;
            pow *= mu * mu;
        }
    }
    // gam1 collected a_j μ^{j-1} for odd j; gam2 a_j μ^j for even j.
    (gam1, gam2)
}

fn is_half_integer(order: f64) -> bool {
    let twice = 2.0 * order;
    twice == twice.round() && (twice as i64) % 2 == 1
}

fn check(order: f64, x: f64) -> Result<()> {
    if !order.is_finite() || order < 0.0 {
        return Err(domain(format!("Bessel K order must be finite and non-negative, got {order}")));
    }
    if !x.is_finite() || x <= 0.0 {
        return Err(domain(format!("Bessel K argument must be finite and positive, got {x}")));
    }
    Ok(())
}

/// `K_ν(x)`.
pub fn bessel_k(order: f64, x: f64) -> Result<f64> {
    check(order, x)?;
    Ok(bessel_k_scaled_unchecked(order, x) * (-x).exp())
}

/// `e^x K_ν(x)`, which stays representable for large `x`.
pub fn bessel_k_scaled(order: f64, x: f64) -> Result<f64> {
    check(order, x)?;
    Ok(bessel_k_scaled_unchecked(order, x))
}

fn bessel_k_scaled_unchecked(order: f64, x: f64) -> f64 {
    if is_half_integer(order) {
        return half_integer_scaled(order, x);
    }
    let nl = (order + 0.5).floor() as usize;
    let mu = order - nl as f64;
    let (k_mu, k_mu1) = if x < SPLIT { temme_series(mu, x) } else { steed_cf2(mu, x) };
    forward(mu, nl, x, k_mu, k_mu1)
}

/// Carry `(K_μ, K_{μ+1})` (both scaled alike) up to `K_{μ+n}`.
fn forward(mu: f64, n: usize, x: f64, mut k_mu: f64, mut k_mu1: f64) -> f64 {
    let two_over_x = 2.0 / x;
    for i in 1..=n {
        let next = (mu + i as f64) * two_over_x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

fn half_integer_scaled(order: f64, x: f64) -> f64 {
    let k_half = (PI / (2.0 * x)).sqrt();
    // K_{-1/2} = K_{1/2}
    let n = (order - 0.5).round() as usize;
    let mut km = k_half;
    let mut k = k_half;
    for i in 0..n {
        let nu = 0.5 + i as f64;
        let next = km + 2.0 * nu / x * k;
        km = k;
        k = next;
    }
    k
}

/// Scaled `(e^x K_μ(x), e^x K_{μ+1}(x))` for `x < 2`, `|μ| ≤ 1/2`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2) = temme_gammas(mu);
    let gampl = recip_gamma_1p(mu);
    let gammi = recip_gamma_1p(-mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    let scale = x.exp();
    (sum * scale, sum1 * 2.0 / x * scale)
}

/// Scaled `(e^x K_μ(x), e^x K_{μ+1}(x))` for `x ≥ 2` via Steed's CF2.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::quad::{integrate, Domain, QuadratureSpec};

    /// Independent oracle: K_ν(x) = ∫_0^∞ e^{-x cosh t} cosh(νt) dt,
    /// integrated in the scaled form e^{-x(cosh t - 1)} to keep relative accuracy.
    fn k_integral(order: f64, x: f64) -> f64 {
        let spec = QuadratureSpec { abs_tol: 1e-300, rel_tol: 1e-13, max_subdivisions: 20_000, ..Default::default() };
        let upper = (1.0 + 700.0 / x).acosh() + 5.0;
        let scaled = integrate(
            &|t: f64| (-x * (t.cosh() - 1.0)).exp() * (order * t).cosh(),
            Domain::Interval(0.0, upper),
            &spec,
        )
        .unwrap()
        .value;
        scaled * (-x).exp()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reciprocal_gamma_series_matches_gamma() {
        for &z in &[-0.5, -0.3, -0.01, 0.0, 0.2, 0.5] {
            let expect = 1.0 / statrs::function::gamma::gamma(1.0 + z);
            assert!((recip_gamma_1p(z) - expect).abs() < 1e-14, "z = {z}");
        }
    }

    #[test]
    fn half_integer_closed_forms() {
        let k = bessel_k(0.5, 1.0).unwrap();
        assert!(rel(k, (PI / 2.0).sqrt() * (-1.0f64).exp()) < 1e-15);
        let k = bessel_k(1.5, 2.0).unwrap();
        assert!(rel(k, (PI / 4.0).sqrt() * (-2.0f64).exp() * 1.5) < 1e-15);
    }

    #[test]
    fn order_one_at_one_matches_integral() {
        let k = bessel_k(1.0, 1.0).unwrap();
        let oracle = k_integral(1.0, 1.0);
        assert!(rel(k, oracle) < 1e-12, "{k} vs {oracle}");
        // Tabulated value K_1(1) = 0.6019072301972346
        assert!(rel(k, 0.601_907_230_197_234_6) < 1e-13);
    }

    #[test]
    fn matches_integral_across_range() {
        for &order in &[0.0, 0.25, 0.75, 1.0, 1.3, 2.0, 2.5, 3.7] {
            for &x in &[1e-3, 0.05, 0.5, 1.0, 1.99, 2.0, 2.01, 5.0, 20.0, 50.0] {
                let k = bessel_k(order, x).unwrap();
                let oracle = k_integral(order, x);
                assert!(rel(k, oracle) < 1e-10, "ν={order} x={x}: {k} vs {oracle}");
            }
        }
    }

    #[test]
    fn recurrence_holds_on_grid() {
        for &x in &[0.1, 1.0, 5.0, 20.0] {
            for &nu in &[0.5, 1.0, 1.5, 2.5] {
                let lhs = bessel_k(nu + 1.0, x).unwrap();
                // K_{-ν} = K_ν
                let km1 = bessel_k((nu - 1.0).abs(), x).unwrap();
                let k = bessel_k(nu, x).unwrap();
                let expect = km1 + 2.0 * nu / x * k;
                assert!(rel(lhs, expect) < 1e-8, "x={x} ν={nu}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -1.0).is_err());
        assert!(bessel_k(1.0, f64::NAN).is_err());
        assert!(bessel_k(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn scaled_stays_finite_for_large_argument() {
        let s = bessel_k_scaled(1.5, 1000.0).unwrap();
        let expect = (PI / 2000.0).sqrt() * (1.0 + 1.0 / 1000.0);
        assert!(rel(s, expect) < 1e-14);
    }
}
