use super::*;
use crate::models::{cauchy_location, gaussian_location, location_scale, student_t_location, Base, ModelFamily};
use crate::observation::{BinGrid, ObservationOperator, TailPolicy};
use crate::specialfn::{integrate, Domain};
use proptest::prelude::*;
use std::sync::Arc;

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn cauchy() -> SharedModel {
    Arc::new(cauchy_location())
}

fn normal() -> SharedModel {
    Arc::new(gaussian_location(1.0).unwrap())
}

fn t3() -> SharedModel {
    Arc::new(student_t_location(3.0).unwrap())
}

fn pt(x: f64) -> Observation {
    Observation::Point(x)
}

#[test]
fn sinusoidal_examples() {
    let f = sinusoidal(0.7).unwrap();
    assert_eq!(f.eval(&pt(1.3), &[1.3]).unwrap()[0], 0.0);
    assert_eq!(f.d_theta(&pt(1.3), &[1.3]).unwrap()[(0, 0)], -0.7);
    assert!(sinusoidal(0.0).is_err());
    assert!(sinusoidal(-1.0).is_err());
    assert_eq!(f.metadata().lipschitz_const, Some(0.7));
    assert!(f.metadata().bounded);
    assert!(f.eval(&Observation::Bin(0), &[0.0]).is_err());
}

#[test]
fn sinusoidal_population_mean_vanishes() {
    for m in [cauchy(), t3(), normal()] {
        let pop = Population::new(m.clone(), &[0.4], ObservationOperator::Point, spec()).unwrap();
        let f = sinusoidal(0.9).unwrap();
        assert_eq!(pop.route(&f, &[0.4]), Route::Trig);
        assert!(pop.mean(&f, &[0.4]).unwrap()[0].abs() < 1e-14, "{}", m.name());
    }
}

#[test]
fn sinusoidal_sensitivity_and_variability_closed_forms() {
    // Cauchy: S = c e^{-c}, V = (1 - e^{-2c})/2; normal: S = c e^{-c²/2}, V = (1 - e^{-2c²})/2
    let c = 0.8;
    let f = sinusoidal(c).unwrap();
    let pop = Population::new(cauchy(), &[0.0], ObservationOperator::Point, spec()).unwrap();
    assert!((pop.sensitivity(&f).unwrap()[(0, 0)] - c * (-c).exp()).abs() < 1e-14);
    assert!((pop.variability(&f).unwrap()[(0, 0)] - 0.5 * (1.0 - (-2.0 * c).exp())).abs() < 1e-14);
    let pop = Population::new(normal(), &[1.0], ObservationOperator::Point, spec()).unwrap();
    assert!((pop.sensitivity(&f).unwrap()[(0, 0)] - c * (-c * c / 2.0).exp()).abs() < 1e-14);
    assert!((pop.variability(&f).unwrap()[(0, 0)] - 0.5 * (1.0 - (-2.0 * c * c).exp())).abs() < 1e-14);
}

#[test]
fn trig_route_agrees_with_quadrature_oracle() {
    let k = KernelProfile::gaussian(1.5).unwrap();
    let f = sinusoidal_weighted(1.1, k).unwrap();
    let op = ObservationOperator::KernelWeighted { kernel: KernelProfile::gaussian(1.0).unwrap() };
    let m = t3();
    let theta = 0.3;
    let pop = Population::new(m.clone(), &[theta], op, spec()).unwrap();
    let w = |x: f64| (-0.5 * x * x).exp() * m.density(x, &[theta]).unwrap();
    let tight = QuadratureSpec::tight();
    let c0 = integrate(&w, Domain::Line, &tight).unwrap().value;
    let at = 0.1;
    let psi = |x: f64| (1.1 * (x - at)).sin() * k.eval(x);
    let mean = integrate(&|x| psi(x) * w(x), Domain::Line, &tight).unwrap().value / c0;
    let second = integrate(&|x| psi(x).powi(2) * w(x), Domain::Line, &tight).unwrap().value / c0;
    let slope = integrate(&|x| -1.1 * (1.1 * (x - at)).cos() * k.eval(x) * w(x), Domain::Line, &tight).unwrap().value / c0;
    assert!((pop.mean(&f, &[at]).unwrap()[0] - mean).abs() < 1e-9);
    assert!((pop.second_moment(&f, &[at]).unwrap()[(0, 0)] - second).abs() < 1e-9);
    assert!((pop.jacobian(&f, &[at]).unwrap()[(0, 0)] - slope).abs() < 1e-9);
}

#[test]
fn score_examples() {
    let s = score_if(normal()).unwrap();
    assert!((s.eval(&pt(2.5), &[1.0]).unwrap()[0] - 1.5).abs() < 1e-15);
    let s = score_if(cauchy()).unwrap();
    let d = 0.7;
    assert!((s.eval(&pt(d), &[0.0]).unwrap()[0] - 2.0 * d / (1.0 + d * d)).abs() < 1e-15);
}

#[test]
fn score_sensitivity_equals_variability() {
    for (m, info) in [(normal(), 1.0), (cauchy(), 0.5), (t3(), 4.0 / 6.0)] {
        let s = score_if(m.clone()).unwrap();
        let pop = Population::new(m.clone(), &[0.2], ObservationOperator::Point, spec()).unwrap();
        assert_eq!(pop.route(&s, &[0.2]), Route::Quadrature);
        assert!(pop.mean(&s, &[0.2]).unwrap()[0].abs() < 1e-9);
        let sens = pop.sensitivity(&s).unwrap()[(0, 0)];
        let var = pop.variability(&s).unwrap()[(0, 0)];
        assert!((sens - info).abs() < 1e-6, "{}: S = {sens}", m.name());
        assert!((var - info).abs() < 1e-8, "{}: V = {var}", m.name());
    }
}

#[test]
fn weak_moment_reduces_to_score() {
    let w = weak_moment_if(1, KernelProfile::classical(), normal()).unwrap();
    let s = score_if(normal()).unwrap();
    for (x, th) in [(0.3, 0.0), (-2.0, 1.5), (4.0, -1.0)] {
        let a = w.eval(&pt(x), &[th]).unwrap()[0];
        let b = s.eval(&pt(x), &[th]).unwrap()[0];
        assert!((a - b).abs() < 1e-10);
    }
    assert!(weak_moment_if(0, KernelProfile::classical(), normal()).is_err());
}

#[test]
fn weak_moment_centering() {
    let k = KernelProfile::gaussian(1.0).unwrap();
    let w = weak_moment_if(2, k, cauchy()).unwrap();
    let pop = Population::new(cauchy(), &[0.5], ObservationOperator::Point, spec()).unwrap();
    assert!(pop.mean(&w, &[0.5]).unwrap()[0].abs() < 1e-9);
    // empirical form
    let data = [pt(0.1), pt(-1.0), pt(2.0)];
    let m2 = weak_moment(&cauchy_location(), &[0.5], 2, &k, &QuadratureSpec::tight()).unwrap();
    let direct = data.iter().map(|y| y.value().unwrap().powi(2) * k.eval(y.value().unwrap())).sum::<f64>() / 3.0 - m2;
    assert!((w.mean(&data, &[0.5]).unwrap()[0] - direct).abs() < 1e-12);
}

#[test]
fn recentred_weighted_moment_is_unbiased() {
    let k = KernelProfile::gaussian(1.0).unwrap();
    let op = ObservationOperator::KernelWeighted { kernel: k };
    let inner: SharedFunctional = Arc::new(weak_moment_if(1, k, t3()).unwrap());
    let theta = [0.7];
    let r = recentred(inner.clone(), t3(), op.clone(), spec());
    let pop = Population::new(t3(), &theta, op, spec()).unwrap();
    assert!(pop.mean(&*inner, &theta).unwrap()[0].abs() > 1e-3);
    assert!(pop.mean(&r, &theta).unwrap()[0].abs() < 1e-9);
}

#[test]
fn weak_cf_examples() {
    let (u, th) = (1.3, 0.6);
    let f = weak_cf_if(u, KernelProfile::classical(), cauchy()).unwrap();
    let m = f.centering(&[th]).unwrap();
    assert!((m - Complex64::from_polar((-u).exp(), u * th)).norm() < 1e-15);
    assert_eq!(f.output_dim(), 2);
    assert!(weak_cf_if(0.0, KernelProfile::classical(), cauchy()).is_err());

    let data: Vec<Observation> = [0.2, -0.9, 3.1, 0.5].iter().map(|&x| pt(x)).collect();
    let ecf: Complex64 = data.iter().map(|y| Complex64::from_polar(1.0, u * y.value().unwrap())).sum::<Complex64>() / 4.0;
    let mean = f.mean(&data, &[th]).unwrap();
    assert!((Complex64::new(mean[0], mean[1]) - (ecf - m)).norm() < 1e-15);

    let pop = Population::new(cauchy(), &[th], ObservationOperator::Point, spec()).unwrap();
    assert!(pop.mean(&f, &[th]).unwrap().amax() < 1e-14);
    // V = ½[[1 + Re φ(2u) − 2Re²φ(u), Im φ(2u) − 2 Re φ Im φ], …] at θ = 0
    let pop0 = Population::new(cauchy(), &[0.0], ObservationOperator::Point, spec()).unwrap();
    let v = pop0.variability(&f).unwrap();
    let (g1, g2) = ((-u).exp(), (-2.0 * u).exp());
    assert!((v[(0, 0)] - (0.5 * (1.0 + g2) - g1 * g1)).abs() < 1e-14);
    assert!((v[(1, 1)] - 0.5 * (1.0 - g2)).abs() < 1e-14);
    assert!(v[(0, 1)].abs() < 1e-14);
}

#[test]
fn weak_cf_jacobian_matches_difference() {
    let f = weak_cf_if(0.9, KernelProfile::gaussian(2.0).unwrap(), t3()).unwrap();
    let pop = Population::new(t3(), &[0.0], ObservationOperator::Point, spec()).unwrap();
    let j = pop.jacobian(&f, &[0.0]).unwrap();
    let fd = central_jacobian(|t| pop.mean(&f, t), &[0.0], 2).unwrap();
    assert!((j - fd).amax() < 1e-7);
}

#[test]
fn location_scale_sinusoidal_is_nuisance_free() {
    for base in [Base::Normal, Base::student(3.0).unwrap()] {
        let m: SharedModel = Arc::new(location_scale(base).unwrap());
        let f = sinusoidal(1.0).unwrap().with_param_dim(2);
        for sigma in [0.5, 1.0, 2.0] {
            let th = [0.3, sigma];
            let pop = Population::new(m.clone(), &th, ObservationOperator::Point, spec()).unwrap();
            assert!(pop.mean(&f, &th).unwrap()[0].abs() < 1e-8);
            let j = pop.jacobian(&f, &th).unwrap();
            assert_eq!(j.shape(), (1, 2));
            assert!(j[(0, 1)].abs() < 1e-12);
        }
    }
}

fn grid(w: f64) -> BinGrid {
    BinGrid::covering(0.0, 4.0, w).unwrap()
}

#[test]
fn conditional_interval_mean_vanishes() {
    for m in [cauchy(), t3(), normal()] {
        for w in [2.0, 0.5] {
            let g = grid(w);
            let f = interval_sinusoidal(1.0, m.clone(), g, IntervalForm::Conditional).unwrap();
            let theta = [0.37];
            let pop = Population::new(m.clone(), &theta, ObservationOperator::Interval { grid: g }, spec()).unwrap();
            assert_eq!(pop.route(&f, &theta), Route::BinSum);
            // independent oracle: Σ_b p_b Ψ(b) with direct quadrature per bin
            let dens = |x: f64| m.density(x, &theta).unwrap();
            let mut oracle = 0.0;
            for b in 0..g.n_bins {
                let (lo, hi) = g.bounds(b);
                let num = integrate(&|x| (x - theta[0]).sin() * dens(x), Domain::from_bounds(lo, hi), &spec());
                if let Ok(num) = num {
                    oracle += num.value;
                }
                let psi = f.eval(&Observation::Bin(b), &theta).unwrap()[0];
                let p = integrate(&dens, Domain::from_bounds(lo, hi), &QuadratureSpec::tight()).unwrap().value;
                if let Ok(num) = integrate(&|x| (x - theta[0]).sin() * dens(x), Domain::from_bounds(lo, hi), &spec()) {
                    assert!((psi * p - num.value).abs() < 1e-6, "{} bin {b}", m.name());
                }
            }
            let mean = pop.mean(&f, &theta).unwrap()[0];
            assert!(mean.abs() < 1e-9, "{} w={w}: {mean}", m.name());
            if m.name() == "normal" {
                assert!(oracle.abs() < 1e-8);
            }
        }
    }
}

#[test]
fn symmetric_bin_gives_zero() {
    let g = BinGrid::new(-3.0, 2.0, 3, TailPolicy::OpenTails).unwrap();
    let f = interval_sinusoidal(1.3, cauchy(), g, IntervalForm::Conditional).unwrap();
    // bin 1 is [-1, 1), symmetric about μ = 0
    let v = f.eval(&Observation::Bin(1), &[0.0]).unwrap()[0];
    assert!(v.abs() < 1e-12, "{v}");
    let whole = BinGrid::new(0.0, 1.0, 2, TailPolicy::OpenTails).unwrap();
    let f = interval_sinusoidal(1.0, normal(), whole, IntervalForm::Conditional).unwrap();
    let p0 = crate::observation::interval_probability(&gaussian_location(1.0).unwrap(), &[0.0], whole.bounds(0), &spec()).unwrap();
    let p1 = 1.0 - p0;
    let v0 = f.eval(&Observation::Bin(0), &[0.0]).unwrap()[0];
    let v1 = f.eval(&Observation::Bin(1), &[0.0]).unwrap()[0];
    assert!((p0 * v0 + p1 * v1).abs() < 1e-12);
}

#[test]
fn empty_bins_are_reported() {
    let g = BinGrid::new(50.0, 1.0, 3, TailPolicy::Truncate).unwrap();
    let f = interval_sinusoidal(1.0, normal(), g, IntervalForm::Conditional).unwrap();
    assert_eq!(f.eval(&Observation::Bin(1), &[0.0]), Err(Error::EmptyBin(1)));
    assert!(f.eval(&Observation::Bin(7), &[0.0]).is_err());
}

#[test]
fn weighted_interval_form_evaluates() {
    let g = grid(1.0);
    let k = KernelProfile::gaussian(1.0).unwrap();
    let f = interval_sinusoidal(1.0, cauchy(), g, IntervalForm::KernelWeighted(k)).unwrap();
    let v = f.eval(&Observation::Bin(3), &[0.2]).unwrap()[0];
    let (lo, hi) = g.bounds(3);
    let oracle = integrate(
        &|x: f64| (x - 0.2).sin() * cauchy_location().density(x, &[0.2]).unwrap() * k.eval(x),
        Domain::from_bounds(lo, hi),
        &QuadratureSpec::tight(),
    )
    .unwrap()
    .value;
    assert!((v - oracle).abs() < 1e-12);
}

#[test]
fn interval_score_information_is_multinomial() {
    let g = grid(1.0);
    let s = interval_score(normal(), g).unwrap();
    let theta = [0.0];
    let pop = Population::new(normal(), &theta, ObservationOperator::Interval { grid: g }, spec()).unwrap();
    let v = pop.variability(&s).unwrap()[(0, 0)];
    // Σ (∂p_b)²/p_b with ∂p_b = φ(a) − φ(b)
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut oracle = 0.0;
    for b in 0..g.n_bins {
        let (lo, hi) = g.bounds(b);
        let p = crate::observation::interval_probability(&gaussian_location(1.0).unwrap(), &theta, (lo, hi), &spec()).unwrap();
        let dp = pdf(lo) - pdf(hi);
        oracle += dp * dp / p;
    }
    assert!((v - oracle).abs() < 1e-7, "{v} vs {oracle}");
    assert!((pop.sensitivity(&s).unwrap()[(0, 0)] - oracle).abs() < 1e-5);
    assert!(pop.mean(&s, &theta).unwrap()[0].abs() < 1e-8);
}

#[test]
fn regularity_of_sinusoidal_under_cauchy() {
    let f = sinusoidal(1.0).unwrap();
    let grid: Vec<Vec<f64>> = [-1.0, 0.0, 2.5].iter().map(|&t| vec![t]).collect();
    let r = regularity_report(&f, cauchy(), &ObservationOperator::Point, &grid, &RegularityOptions::default());
    assert!(r.passed(), "{r:?}");
    for p in &r.points {
        assert!(p.unbiasedness < 1e-8);
        assert_eq!(p.roots, 1);
    }
}

#[test]
fn large_tuning_constant_flags_multiple_roots() {
    // E_{θ₀}[sin(c(X − θ))] = −e^{−c} sin(c(θ − θ₀)) vanishes at θ − θ₀ = kπ/c
    let c = 3.0;
    let f = sinusoidal(c).unwrap();
    let opts = RegularityOptions::default();
    let r = regularity_report(&f, cauchy(), &ObservationOperator::Point, &[vec![0.0]], &opts);
    let expected = (0..)
        .map(|k| k as f64 * std::f64::consts::PI / c)
        .take_while(|t| *t < opts.scan_half_width)
        .count()
        * 2
        - 1;
    assert_eq!(r.points[0].roots, expected);
    assert!(!r.points[0].unique_root && !r.passed());
}

#[test]
fn regularity_of_normal_score() {
    let s = score_if(normal()).unwrap();
    let r = regularity_report(&s, normal(), &ObservationOperator::Point, &[vec![0.0], vec![1.0]], &RegularityOptions::default());
    assert!(r.passed(), "{r:?}");
    assert!(r.points.iter().all(|p| p.unbiasedness < 1e-10 && p.interchange_gap < 1e-6));
}

#[test]
fn regularity_reports_failures_without_panicking() {
    let s = score_if(normal()).unwrap();
    let r = regularity_report(&s, normal(), &ObservationOperator::Point, &[vec![f64::NAN]], &RegularityOptions::default());
    assert!(!r.passed() && !r.points[0].failures.is_empty());
}

#[test]
fn stacked_functionals() {
    let a: SharedFunctional = Arc::new(sinusoidal(0.5).unwrap());
    let b: SharedFunctional = Arc::new(sinusoidal(1.5).unwrap());
    let s = stack(vec![a, b]).unwrap();
    assert_eq!(s.output_dim(), 2);
    let v = s.eval(&pt(1.0), &[0.0]).unwrap();
    assert!((v[0] - 0.5f64.sin()).abs() < 1e-15 && (v[1] - 1.5f64.sin()).abs() < 1e-15);
    let pop = Population::new(cauchy(), &[0.0], ObservationOperator::Point, spec()).unwrap();
    let vm = pop.variability(&s).unwrap();
    // E[sin(aX) sin(bX)] = (e^{−|a−b|} − e^{−(a+b)})/2
    assert!((vm[(0, 1)] - 0.5 * ((-1.0f64).exp() - (-2.0f64).exp())).abs() < 1e-14);
    assert!(stack(vec![]).is_err());
}

#[test]
fn monte_carlo_route_for_transform_data() {
    let op = ObservationOperator::Transform { frequencies: vec![1.0], kernel: KernelProfile::classical() };
    let pop = Population::new(cauchy(), &[0.0], op, spec()).unwrap().with_monte_carlo(20_000, 3);
    let f = sinusoidal(1.0).unwrap();
    assert_eq!(pop.route(&f, &[0.0]), Route::MonteCarlo);
    assert!(matches!(pop.mean(&f, &[0.0]), Err(Error::VariantMismatch(_))));
}

proptest! {
    #[test]
    fn sinusoidal_is_bounded(x in -1e6f64..1e6, th in -1e3f64..1e3, c in 0.01f64..20.0) {
        let f = sinusoidal(c).unwrap();
        prop_assert!(f.eval(&pt(x), &[th]).unwrap()[0].abs() <= 1.0);
    }

    #[test]
    fn sinusoidal_is_lipschitz(x in -100.0f64..100.0, a in -10.0f64..10.0, b in -10.0f64..10.0, c in 0.01f64..10.0) {
        let f = sinusoidal(c).unwrap();
        let gap = (f.eval(&pt(x), &[a]).unwrap()[0] - f.eval(&pt(x), &[b]).unwrap()[0]).abs();
        prop_assert!(gap <= c * (a - b).abs() + 1e-15);
    }

    #[test]
    fn analytic_derivative_matches_difference(x in -20.0f64..20.0, th in -5.0f64..5.0, c in 0.1f64..3.0) {
        let f = sinusoidal(c).unwrap();
        let num = central_jacobian(|t| f.eval(&pt(x), t), &[th], 1).unwrap()[(0, 0)];
        prop_assert!((num - f.d_theta(&pt(x), &[th]).unwrap()[(0, 0)]).abs() < 1e-7);
    }
}
