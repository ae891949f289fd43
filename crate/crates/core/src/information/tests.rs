use super::*;
use crate::inference::sinusoidal_weighted;
use crate::models::{cauchy_location, gaussian_location, location_scale, student_t_location};
use crate::observation::TailPolicy;
use crate::specialfn::{integrate, Domain};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec() -> QuadratureSpec {
    QuadratureSpec::tight()
}

fn shared(m: Location) -> SharedModel {
    Arc::new(m)
}

/// `∫ (∂ log g)² g` for `g ∝ f_θ φ` by direct quadrature with finite differences in θ.
fn weighted_fisher_oracle(model: &Location, kernel: &KernelProfile, theta: f64) -> f64 {
    let h = 1e-4;
    let c = |t: f64| {
        integrate(&|x| model.density(x, &[t]).unwrap() * kernel.eval(x), Domain::Line, &spec())
            .unwrap()
            .value
    };
    let (c0, cp, cm) = (c(theta), c(theta + h), c(theta - h));
    let dlogc = (cp - cm) / (2.0 * h * c0);
    let integrand = |x: f64| {
        let s = model.score(x, &[theta]).unwrap()[0] - dlogc;
        s * s * model.density(x, &[theta]).unwrap() * kernel.eval(x) / c0
    };
    integrate(&integrand, Domain::Line, &spec()).unwrap().value
}

#[test]
fn classical_fisher_of_location_families() {
    let t3 = student_t_location(3.0).unwrap();
    let oracle = integrate(
        &|x: f64| {
            let s = t3.score(x, &[0.0]).unwrap()[0];
            s * s * t3.density(x, &[0.0]).unwrap()
        },
        Domain::Line,
        &spec(),
    )
    .unwrap()
    .value;
    let i = fisher_classical(&shared(t3), &[0.0], &spec()).unwrap()[(0, 0)];
    assert!((i - oracle).abs() < 1e-8);
    assert!((i - 2.0 / 3.0).abs() < 1e-8);
    let i = fisher_classical(&shared(cauchy_location()), &[1.0], &spec()).unwrap()[(0, 0)];
    assert!((i - 0.5).abs() < 1e-8);
    let i = fisher_classical(&shared(gaussian_location(2.0).unwrap()), &[0.0], &spec()).unwrap()[(0, 0)];
    assert!((i - 0.25).abs() < 1e-8);
}

#[test]
fn cauchy_kernel_weighted_matches_direct_quadrature() {
    let m = cauchy_location();
    for s in [0.5, 1.0, 2.0] {
        let k = KernelProfile::gaussian(s).unwrap();
        let got = fisher_kernel_weighted(&shared(m.clone()), &k, 0.3, &spec(), 1e-5).unwrap();
        let want = weighted_fisher_oracle(&m, &k, 0.3);
        assert!((got - want).abs() < 1e-6, "s={s}: {got} vs {want}");
        assert!((got - want).abs() < 1e-4 * want);
    }
}

#[test]
fn normal_under_gaussian_kernel() {
    // the re-weighted law is normal with variance s²/(1+s²) and mean θ s²/(1+s²)
    let m = shared(gaussian_location(1.0).unwrap());
    let mut last = 0.0;
    for s in [0.25, 0.5, 1.0, 2.0, 4.0, 16.0] {
        let k = KernelProfile::gaussian(s).unwrap();
        let i = fisher_kernel_weighted(&m, &k, 0.7, &spec(), 1e-5).unwrap();
        assert!((i - s * s / (1.0 + s * s)).abs() < 1e-7, "s={s}: {i}");
        assert!(i > last && i < 1.0);
        last = i;
    }
    let i = fisher_kernel_weighted(&m, &KernelProfile::classical(), 0.7, &spec(), 1e-5).unwrap();
    assert!((i - 1.0).abs() < 1e-8);
}

#[test]
fn half_line_indicator_information() {
    let m = gaussian_location(1.0).unwrap();
    let i = fisher_interval(&m, (0.4, f64::INFINITY), &[0.4], &spec(), 1e-5).unwrap();
    assert!((i - 2.0 / std::f64::consts::PI).abs() < 1e-8);
    assert!(matches!(
        fisher_interval(&m, (40.0, f64::INFINITY), &[0.0], &spec(), 1e-5),
        Err(Error::DegenerateProbability(_))
    ));
}

#[test]
fn interval_grid_information_is_below_classical_and_grows_with_resolution() {
    let m = gaussian_location(1.0).unwrap();
    let coarse = BinGrid::new(-3.0, 2.0, 3, TailPolicy::OpenTails).unwrap();
    let fine = BinGrid::new(-4.0, 0.1, 80, TailPolicy::OpenTails).unwrap();
    let ic = fisher_interval_grid(&m, &coarse, &[0.2], &spec(), 1e-5).unwrap()[(0, 0)];
    let i_f = fisher_interval_grid(&m, &fine, &[0.2], &spec(), 1e-5).unwrap()[(0, 0)];
    assert!(ic < i_f && i_f < 1.0);
    assert!(i_f > 0.99);
}

#[test]
fn closed_form_godambe_agrees_with_numeric() {
    for fam in [cauchy_location(), gaussian_location(1.5).unwrap(), student_t_location(3.0).unwrap()] {
        let m = shared(fam.clone());
        for c in [0.2, 0.56, 1.0, 2.5] {
            let closed = godambe_sinusoidal_closed(&fam, c).unwrap();
            let numeric = godambe_sinusoidal_numeric(&m, c, &[0.3], &spec()).unwrap();
            assert!((closed - numeric).abs() < 1e-6, "{} c={c}", fam.name());
        }
    }
    assert!(godambe_sinusoidal_closed(&cauchy_location(), 0.0).is_err());
}

#[test]
fn cauchy_closed_form() {
    for c in [0.3f64, 1.0, 1.7] {
        let e = (-2.0 * c).exp();
        let want = 2.0 * c * c * e / (1.0 - e);
        assert!((godambe_sinusoidal_closed(&cauchy_location(), c).unwrap() - want).abs() < 1e-14);
    }
}

#[test]
fn closed_form_agrees_with_simulation() {
    let fam = cauchy_location();
    let c = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 400_000;
    let (mut s, mut v) = (0.0, 0.0);
    for _ in 0..n {
        let x = fam.sample(&[0.0], &mut rng);
        s += c * (c * x).cos();
        v += (c * x).sin().powi(2);
    }
    let (s, v) = (s / n as f64, v / n as f64);
    let closed = godambe_sinusoidal_closed(&fam, c).unwrap();
    assert!(((s * s / v) - closed).abs() < 0.02 * closed);
}

#[test]
fn monte_carlo_route_cross_check() {
    // the score of a t₃ law has no trigonometric form, so quadrature is used;
    // a Monte Carlo population must agree to sampling accuracy
    let m: SharedModel = shared(student_t_location(3.0).unwrap());
    let psi = score_if(m.clone()).unwrap();
    let quad = godambe_numeric(&psi, &m, &ObservationOperator::Point, &[0.0], &spec(), None).unwrap();
    assert_eq!(quad.route, Route::Quadrature);
    let pop = Population::new(m.clone(), &[0.0], ObservationOperator::Point, spec()).unwrap().with_monte_carlo(200_000, 3);
    let sample = pop.sample().unwrap();
    let vals = psi.eval_batch(&sample, &[0.0]).unwrap();
    let v = vals.iter().map(|x| x[0] * x[0]).sum::<f64>() / vals.len() as f64;
    assert!((v - quad.v[(0, 0)]).abs() < 0.02);
    assert!((quad.g[(0, 0)] - 2.0 / 3.0).abs() < 1e-7);
}

#[test]
fn gaussian_location_scale_are() {
    for (c, sigma) in [(0.3, 1.0), (1.0, 0.5), (0.8, 2.0)] {
        let u: f64 = c * c * sigma * sigma;
        let j = locscale_godambe(c, sigma, &|t| (-t * t / 2.0).exp());
        let are = j * sigma * sigma;
        assert!((are - u / u.sinh()).abs() < 1e-12);
    }
    let base = location_scale(Base::Normal).unwrap();
    assert_eq!(base.base(), Base::Normal);
}

#[test]
fn elliptical_are_reduces_to_univariate() {
    let sigma2 = 2.0;
    let a = DVector::from_element(1, 1.0);
    let s = DMatrix::from_element(1, 1, sigma2);
    for c in [0.2, 0.7, 1.5] {
        let are = elliptical_are(&a, &s, c).unwrap();
        let u = c * c / sigma2;
        assert!((are - u / u.sinh()).abs() < 1e-12);
    }
}

#[test]
fn elliptical_optimal_direction_attains_scalar_form() {
    let a = DVector::from_vec(vec![1.0, -0.5]);
    let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
    let c = 0.6;
    let v = elliptical_optimal_direction(&a, &s, c).unwrap();
    let general = elliptical_are_general(&a, &s, &v).unwrap();
    assert!((general - elliptical_are(&a, &s, c).unwrap()).abs() < 1e-12);
    let off = elliptical_are_general(&a, &s, &DVector::from_vec(vec![0.3, 0.3])).unwrap();
    assert!(off < 1.0);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(elliptical_are(&a, &bad, c), Err(Error::NotPositiveDefinite)));
}

#[test]
fn hierarchy_holds_for_reweighted_and_binned_data() {
    let m: SharedModel = shared(gaussian_location(1.0).unwrap());
    let k = KernelProfile::gaussian(1.5).unwrap();
    let psi: SharedFunctional = Arc::new(sinusoidal_weighted(0.8, k).unwrap());
    let r = hierarchy_report(&m, &ObservationOperator::KernelWeighted { kernel: k }, psi, &[0.2], &spec());
    assert!(r.holds(), "{r:?}");
    let m: SharedModel = shared(cauchy_location());
    let grid = BinGrid::new(-3.0, 0.5, 12, TailPolicy::OpenTails).unwrap();
    let psi: SharedFunctional = Arc::new(crate::inference::interval_score(m.clone(), grid).unwrap());
    let r = hierarchy_report(&m, &ObservationOperator::Interval { grid }, psi, &[0.2], &spec());
    assert!(r.holds(), "{r:?}");
    // the bin score attains the binned information
    assert!(r.estimation_cost[(0, 0)].abs() < 1e-6);
}

#[test]
fn reweighting_can_sharpen_heavy_tails() {
    // a gaussian window trims Cauchy tails, so the re-weighted law is more informative
    let m: SharedModel = shared(cauchy_location());
    let k = KernelProfile::gaussian(1.5).unwrap();
    let psi: SharedFunctional = Arc::new(sinusoidal_weighted(0.8, k).unwrap());
    let r = hierarchy_report(&m, &ObservationOperator::KernelWeighted { kernel: k }, psi, &[0.2], &spec());
    assert!(r.i_o[(0, 0)] > r.i_classical[(0, 0)]);
    assert!(r.estimation_cost[(0, 0)] >= -HIERARCHY_TOL);
    assert_eq!(r.flags.len(), 1);
}

#[test]
fn hierarchy_records_failures() {
    let m: SharedModel = shared(gaussian_location(1.0).unwrap());
    let op = ObservationOperator::Convolutional { kernel: KernelProfile::gaussian(1.0).unwrap(), grid: vec![0.0, 1.0] };
    let psi: SharedFunctional = Arc::new(sinusoidal(1.0).unwrap());
    let r = hierarchy_report(&m, &op, psi, &[0.0], &spec());
    assert!(!r.holds());
    assert!(!r.flags.is_empty());
}

#[test]
fn are_curves() {
    let grid: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01).collect();
    let cauchy = are_curve(&cauchy_location(), &grid).unwrap();
    assert!((cauchy.argmax.c - 0.80).abs() < 0.011);
    assert!((cauchy.argmax.are - 0.6477).abs() < 1e-3);
    assert!(cauchy.note.is_some());
    assert_eq!(cauchy.small_c_limit, 0.0);
    let normal = are_curve(&gaussian_location(1.0).unwrap(), &grid).unwrap();
    assert!(normal.points.iter().all(|p| p.are <= 1.0 + 1e-12));
    assert!((normal.points[0].are - 1.0).abs() < 1e-4);
    assert_eq!(normal.small_c_limit, 1.0);
    let t3 = are_curve(&student_t_location(3.0).unwrap(), &[1e-5]).unwrap();
    assert!((t3.points[0].are - t3.small_c_limit).abs() < 1e-3);
    assert!((t3.small_c_limit - 0.5).abs() < 1e-12);
    assert!(are_curve(&cauchy_location(), &[]).is_err());
    assert!(are_curve(&cauchy_location(), &[0.5, -1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sinusoidal_are_never_exceeds_one(c in 0.01f64..5.0, nu in 1.0f64..30.0) {
        for fam in [cauchy_location(), student_t_location(nu).unwrap(), gaussian_location(1.0).unwrap()] {
            let g = godambe_sinusoidal_closed(&fam, c).unwrap();
            prop_assert!(g > 0.0);
            prop_assert!(g <= fam.base().location_fisher() + 1e-12);
        }
    }

    #[test]
    fn kernel_weighting_loses_information(s in 0.3f64..5.0, theta in -1.0f64..1.0) {
        let m = shared(gaussian_location(1.0).unwrap());
        let k = KernelProfile::gaussian(s).unwrap();
        let i = fisher_kernel_weighted(&m, &k, theta, &spec(), 1e-5).unwrap();
        prop_assert!(i <= 1.0 + 1e-8 && i > 0.0);
    }
}
