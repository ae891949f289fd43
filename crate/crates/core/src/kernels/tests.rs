use super::*;
use crate::models::{cauchy_location, gaussian_location, student_t_location, two_component_mixture, SharedModel};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

#[test]
fn cauchy_second_weak_moment_is_finite() {
    let m = cauchy_location();
    let k = KernelProfile::gaussian(1.0).unwrap();
    let a = weak_moment(&m, &[0.0], 2, &k, &spec()).unwrap();
    let b = weak_moment(&m, &[0.0], 2, &k, &spec().scaled(0.5)).unwrap();
    assert!(a > 0.0 && a.is_finite());
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn classical_normalisation() {
    let m = gaussian_location(1.0).unwrap();
    let one = weak_moment(&m, &[0.0], 0, &KernelProfile::classical(), &spec()).unwrap();
    assert!((one - 1.0).abs() < 1e-10);
}

#[test]
fn cauchy_cf_shortcut() {
    let m = cauchy_location();
    let v = pairing(&m, &[0.0], TestFunction::Exponential(1.0), &KernelProfile::classical(), &spec()).unwrap();
    assert!((v - Complex64::new((-1.0f64).exp(), 0.0)).norm() < 1e-15);
    let shifted = weak_cf(&m, &[0.7], 1.3, &KernelProfile::classical(), &spec()).unwrap();
    assert!((shifted - Complex64::from_polar((-1.3f64).exp(), 1.3 * 0.7)).norm() < 1e-15);
}

#[test]
fn t3_cf_at_one() {
    let m = student_t_location(3.0).unwrap();
    let v = weak_cf(&m, &[0.0], 1.0, &KernelProfile::classical(), &spec()).unwrap();
    let g3 = (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
    assert!((v.re - g3).abs() < 1e-14 && v.im.abs() < 1e-15);
}

#[test]
fn odd_weak_moment_vanishes_under_symmetry() {
    let m = cauchy_location();
    let k = KernelProfile::gaussian(1.0).unwrap();
    assert!(weak_moment(&m, &[0.0], 1, &k, &spec()).unwrap().abs() < 1e-12);
}

#[test]
fn gaussian_overlap_closed_form() {
    // ∫ N(x; μ, 1) exp(-x²/(2s²)) dx = s/√(1+s²) · exp(-μ²/(2(1+s²)))
    let m = gaussian_location(1.0).unwrap();
    for &(mu, s) in &[(0.0, 1.0), (1.5, 0.5), (-2.0, 3.0)] {
        let k = KernelProfile::gaussian(s).unwrap();
        let got = weak_moment(&m, &[mu], 0, &k, &spec()).unwrap();
        let v = 1.0 + s * s;
        let expect = s / v.sqrt() * (-mu * mu / (2.0 * v)).exp();
        assert!((got - expect).abs() < 1e-10, "μ={mu} s={s}: {got} vs {expect}");
    }
}

#[test]
fn t3_second_weak_moment_is_stable() {
    let m = student_t_location(3.0).unwrap();
    let k = KernelProfile::gaussian(1.0).unwrap();
    let a = weak_moment(&m, &[0.0], 2, &k, &spec()).unwrap();
    let b = weak_moment(&m, &[0.0], 2, &k, &QuadratureSpec::tight()).unwrap();
    assert!((a - b).abs() < 1e-8);
    let nearby = weak_moment(&m, &[0.0], 2, &KernelProfile::gaussian(1.0 + 1e-4).unwrap(), &spec()).unwrap();
    assert!((nearby - a).abs() < 1e-3);
}

#[test]
fn weak_cf_at_origin_is_mass() {
    let m = student_t_location(3.0).unwrap();
    let k = KernelProfile::gaussian(0.8).unwrap();
    let z = weak_cf(&m, &[0.4], 0.0, &k, &spec()).unwrap();
    let m0 = weak_moment(&m, &[0.4], 0, &k, &spec()).unwrap();
    assert!((z.re - m0).abs() < 1e-12 && z.im.abs() < 1e-15);
}

#[test]
fn gaussian_cumulants() {
    let m = gaussian_location(1.5).unwrap();
    let c = weak_cumulants(&m, &[0.8], 4, &KernelProfile::classical(), &spec(), 1e-3).unwrap();
    assert!((c.values[0] - 0.8).abs() < 1e-8);
    assert!((c.values[1] - 2.25).abs() < 1e-7);
    assert!(c.values[2].abs() < 1e-4 && c.values[3].abs() < 1e-4);
    assert!(c.clean());
}

#[test]
fn gaussian_kernel_cumulants_match_product_law() {
    // N(μ,1)·exp(-x²/(2s²)) ∝ N(μ s²/(1+s²), s²/(1+s²))
    let m = gaussian_location(1.0).unwrap();
    let (mu, s) = (1.0, 2.0);
    let k = KernelProfile::gaussian(s).unwrap();
    let c = weak_cumulants(&m, &[mu], 2, &k, &spec(), 1e-3).unwrap();
    let v = s * s / (1.0 + s * s);
    assert!((c.values[0] - mu * v).abs() < 1e-6);
    assert!((c.values[1] - v).abs() < 1e-5);
}

#[test]
fn symmetric_first_cumulant_vanishes() {
    let m = cauchy_location();
    let k = KernelProfile::gaussian(1.0).unwrap();
    let c = weak_cumulants(&m, &[0.0], 1, &k, &spec(), 1e-3).unwrap();
    assert!(c.values[0].abs() < 1e-9);
}

#[test]
fn cauchy_weak_variance_step_halving() {
    let m = cauchy_location();
    let k = KernelProfile::gaussian(1.0).unwrap();
    let a = weak_cumulants(&m, &[0.0], 2, &k, &spec(), 1e-3).unwrap().values[1];
    let b = weak_cumulants(&m, &[0.0], 2, &k, &spec(), 5e-4).unwrap().values[1];
    assert!(a > 0.0 && (a - b).abs() < 1e-5, "{a} vs {b}");
    // κ₂ equals the variance of the normalised weighted law.
    let m0 = weak_moment(&m, &[0.0], 0, &k, &spec()).unwrap();
    let m2 = weak_moment(&m, &[0.0], 2, &k, &spec()).unwrap();
    assert!((a - m2 / m0).abs() < 1e-5);
}

#[test]
fn cumulant_argument_checks() {
    let m = cauchy_location();
    let k = KernelProfile::gaussian(1.0).unwrap();
    assert!(weak_cumulants(&m, &[0.0], 5, &k, &spec(), 1e-3).is_err());
    assert!(weak_cumulants(&m, &[0.0], 0, &k, &spec(), 1e-3).is_err());
    assert!(weak_cumulants(&m, &[0.0], 2, &k, &spec(), 0.0).is_err());
    let far = KernelProfile::gaussian(0.01).unwrap().centered_at(1e4);
    let g = gaussian_location(1.0).unwrap();
    assert!(matches!(weak_cumulants(&g, &[0.0], 1, &far, &spec(), 1e-3), Err(Error::DegenerateCf(_))));
}

#[test]
fn fourier_route_matches_cf_for_heavy_tails() {
    let m = cauchy_location();
    for u in [0.25, 1.0, 2.0] {
        for theta in [0.0, 1.3] {
            let z = fourier_pairing(&m, &[theta], u, &KernelProfile::classical(), &spec()).unwrap();
            assert!((z - m.cf(u, &[theta])).norm() < 1e-9, "u={u}: {z}");
        }
    }
    let n1: SharedModel = Arc::new(gaussian_location(1.0).unwrap());
    let skew = two_component_mixture(n1.clone(), vec![-1.0], n1, vec![2.0]).unwrap();
    let z = fourier_pairing(&skew, &[0.3], -0.7, &KernelProfile::classical(), &spec()).unwrap();
    assert!((z - skew.cf(-0.7, &[0.3])).norm() < 1e-9);
}

#[test]
fn kernel_product_identity() {
    let a = KernelProfile::gaussian(0.7).unwrap().centered_at(0.3);
    let b = KernelProfile::gaussian(1.9).unwrap().centered_at(-1.1);
    let (c, amp) = a.product(&b);
    for x in [-2.0, 0.0, 0.4, 3.0] {
        assert!((a.eval(x) * b.eval(x) - amp * c.eval(x)).abs() < 1e-14);
    }
    let sq = a.power(2);
    assert!((sq.eval(1.0) - a.eval(1.0).powi(2)).abs() < 1e-15);
    assert!(KernelProfile::gaussian(0.0).is_err());
    assert!(KernelProfile::classical().eval(1e9) == 1.0 && !KernelProfile::classical().is_schwartz());
}

#[test]
fn kernel_continuity_in_width() {
    let m = cauchy_location();
    let g = |x: f64| x * x;
    let base = pairing(&m, &[0.0], TestFunction::Real(&g), &KernelProfile::gaussian(1.0).unwrap(), &spec()).unwrap().re;
    let mut prev = f64::INFINITY;
    for d in [1e-2, 1e-3, 1e-4] {
        let k = KernelProfile::gaussian(1.0 + d).unwrap();
        let v = pairing(&m, &[0.0], TestFunction::Real(&g), &k, &spec()).unwrap().re;
        let gap = (v - base).abs();
        assert!(gap < prev);
        prev = gap;
    }
}

#[test]
fn complex_pairing_matches_components() {
    let m = student_t_location(3.0).unwrap();
    let k = KernelProfile::gaussian(1.5).unwrap();
    let g = |x: f64| Complex64::from_polar(1.0, 0.9 * x);
    let a = pairing(&m, &[0.2], TestFunction::Complex(&g), &k, &spec()).unwrap();
    let b = weak_cf(&m, &[0.2], 0.9, &k, &spec()).unwrap();
    assert!((a - b).norm() < 1e-10);
}

#[test]
fn summary_is_consistent() {
    let m = gaussian_location(1.0).unwrap();
    let k = KernelProfile::gaussian(1.0).unwrap();
    let s = weak_summary(&m, &[0.0], 2, &[0.0, 1.0], 2, &k, &spec()).unwrap();
    assert!(s.moments[0] > 0.0);
    assert!((s.cf_grid[0].1.re - s.moments[0]).abs() < 1e-12);
    // weighted law N(0, 1/2)
    assert!((s.cumulants[1] - 0.5).abs() < 1e-5);
    assert!((s.moments[0] - 1.0 / 2f64.sqrt()).abs() < 1e-10);
    let _ = PI;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn non_negative_pairings_are_non_negative(theta in -3.0f64..3.0, s in 0.2f64..4.0, a in 0.0f64..2.0) {
        let k = KernelProfile::gaussian(s).unwrap();
        let g = move |x: f64| (x - a).powi(2);
        for m in [
            Arc::new(cauchy_location()) as SharedModel,
            Arc::new(student_t_location(3.0).unwrap()),
            Arc::new(gaussian_location(1.0).unwrap()),
        ] {
            let v = pairing(m.as_ref(), &[theta], TestFunction::Real(&g), &k, &spec()).unwrap().re;
            prop_assert!(v >= -1e-12);
        }
    }

    #[test]
    fn weak_cf_is_hermitian(theta in -2.0f64..2.0, t in 0.05f64..3.0, s in 0.3f64..3.0) {
        let m = student_t_location(3.0).unwrap();
        let k = KernelProfile::gaussian(s).unwrap();
        let a = weak_cf(&m, &[theta], t, &k, &spec()).unwrap();
        let b = weak_cf(&m, &[theta], -t, &k, &spec()).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-10);
    }
}
