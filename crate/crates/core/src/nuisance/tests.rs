use super::*;
use crate::inference::sinusoidal;
use crate::information::locscale_godambe;
use crate::models::{location_scale, Base};
use crate::specialfn::{integrate, Domain};
use std::sync::Arc;

fn spec() -> QuadratureSpec {
    QuadratureSpec::tight()
}

fn locscale(base: Base) -> PartitionedModel {
    PartitionedModel::new(Arc::new(location_scale(base).unwrap()), vec![0], vec![1]).unwrap()
}

/// `(x − μ)²`, whose mean depends on σ.
struct Squared(Metadata);

impl Squared {
    fn new() -> Self {
        Squared(Metadata { name: "squared".into(), bounded: false, lipschitz_const: None, requires: crate::observation::OperatorKind::Point })
    }
}

impl InferenceFunctional for Squared {
    fn metadata(&self) -> &Metadata {
        &self.0
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, (y.value()? - theta[0]).powi(2)))
    }
}

#[test]
fn partition_validation() {
    let m: SharedModel = Arc::new(location_scale(Base::Normal).unwrap());
    assert!(PartitionedModel::new(m.clone(), vec![0], vec![0]).is_err());
    assert!(PartitionedModel::new(m.clone(), vec![0], vec![]).is_err());
    assert!(PartitionedModel::new(m.clone(), vec![0], vec![2]).is_err());
    assert!(PartitionedModel::new(m.clone(), vec![], vec![0, 1]).is_err());
    assert!(PartitionedModel::new(m, vec![1], vec![0]).is_ok());
}

#[test]
fn orthogonal_functional_is_unchanged() {
    let pm = locscale(Base::Normal);
    let theta = [0.3, 1.4];
    let phi: SharedFunctional = Arc::new(sinusoidal(0.7).unwrap().with_param_dim(2));
    let proj = bhapkar_godambe_project(phi.clone(), &pm, &theta, &spec()).unwrap();
    assert!(proj.coefficients().amax() < 1e-10);
    for x in [-2.0, 0.1, 3.3] {
        let y = Observation::Point(x);
        assert!((proj.eval(&y, &theta).unwrap() - phi.eval(&y, &theta).unwrap()).amax() < 1e-10);
    }
    let u: SharedFunctional = Arc::new(pm.interest_score().unwrap());
    let proj = bhapkar_godambe_project(u.clone(), &pm, &theta, &spec()).unwrap();
    assert!(proj.coefficients().amax() < 1e-10);
}

#[test]
fn projected_t3_score_is_orthogonal() {
    let pm = locscale(Base::Student { nu: 3.0 });
    let theta = [0.2, 1.3];
    // project a deliberately non-orthogonal combination of both scores
    let phi: SharedFunctional = Arc::new(crate::inference::stack(vec![Arc::new(Squared::new())]).unwrap());
    let proj = bhapkar_godambe_project(phi, &pm, &theta, &spec()).unwrap();
    assert!(proj.coefficients().amax() > 0.1);
    let model = pm.model().clone();
    let oracle = integrate(
        &|x| {
            let y = Observation::Point(x);
            let psi = proj.eval(&y, &theta).unwrap()[0];
            psi * model.score(x, &theta).unwrap()[1] * model.density(x, &theta).unwrap()
        },
        Domain::Line,
        &spec(),
    )
    .unwrap()
    .value;
    assert!(oracle.abs() < 1e-8, "{oracle}");
    let u: SharedFunctional = Arc::new(pm.interest_score().unwrap());
    let proj = bhapkar_godambe_project(u, &pm, &theta, &spec()).unwrap();
    let r = orthogonality_check(&proj, &pm, &[theta.to_vec()], &spec()).unwrap();
    assert!(r.max_residual() < 1e-8);
}

#[test]
fn projection_is_idempotent_and_shrinks_variance() {
    let pm = locscale(Base::Student { nu: 5.0 });
    let theta = [0.0, 0.8];
    let phi: SharedFunctional = Arc::new(Squared::new());
    let once: SharedFunctional = Arc::new(bhapkar_godambe_project(phi.clone(), &pm, &theta, &spec()).unwrap());
    let twice = bhapkar_godambe_project(once.clone(), &pm, &theta, &spec()).unwrap();
    assert!(twice.coefficients().amax() < 1e-10, "{}", twice.coefficients());
    let pop = Population::new(pm.model().clone(), &theta, ObservationOperator::Point, spec()).unwrap();
    let v_phi = pop.variability(&*phi).unwrap()[(0, 0)];
    let v_once = pop.variability(&*once).unwrap()[(0, 0)];
    assert!(v_once <= v_phi);
}

#[test]
fn orthogonality_diagnostics() {
    let pm = locscale(Base::Normal);
    let grid: Vec<Vec<f64>> = [0.5, 1.0, 2.0, 4.0].iter().map(|&s| vec![0.1, s]).collect();
    let sin = sinusoidal(0.9).unwrap().with_param_dim(2);
    assert!(orthogonality_check(&sin, &pm, &grid, &spec()).unwrap().max_residual() < 1e-8);
    // E[(x−μ)² U_σ] = 2σ
    let r = orthogonality_check(&Squared::new(), &pm, &grid, &spec()).unwrap();
    assert!((r.max_residual() - 8.0).abs() < 1e-6);
    assert_eq!(r.worst_theta, vec![0.1, 4.0]);
    // U_σ against itself gives its information 2/σ²
    let r = orthogonality_check(&pm.nuisance_score().unwrap(), &pm, &[vec![0.0, 0.5]], &spec()).unwrap();
    assert!((r.max_residual() - 8.0).abs() < 1e-6);
}

#[test]
fn interest_block_godambe() {
    let pm = locscale(Base::Normal);
    for sigma in [0.7, 1.0, 2.0] {
        let theta = [0.4, sigma];
        for c in [0.3, 1.1] {
            let j = nuisance_godambe(&sinusoidal(c).unwrap().with_param_dim(2), &pm, &theta, &spec()).unwrap()[(0, 0)];
            let want = locscale_godambe(c, sigma, &|t| (-t * t / 2.0).exp());
            assert!((j - want).abs() < 1e-8, "σ={sigma} c={c}");
            assert!(j <= 1.0 / (sigma * sigma) + 1e-10);
        }
        let efficient = pm.interest_score().unwrap();
        let j = nuisance_godambe(&efficient, &pm, &theta, &spec()).unwrap()[(0, 0)];
        assert!((j - 1.0 / (sigma * sigma)).abs() < 1e-7);
    }
    let f = sinusoidal(0.8).unwrap().with_param_dim(2);
    let j1 = nuisance_godambe(&f, &pm, &[0.0, 1.0], &spec()).unwrap()[(0, 0)];
    let j2 = nuisance_godambe(&f, &pm, &[0.0, 2.0], &spec()).unwrap()[(0, 0)];
    assert!((j1 - j2).abs() > 1e-3);
}

#[test]
fn refresh_tracks_the_current_parameter() {
    let pm = locscale(Base::Student { nu: 4.0 });
    let phi: SharedFunctional = Arc::new(Squared::new());
    let frozen = bhapkar_godambe_project(phi.clone(), &pm, &[0.0, 1.0], &spec()).unwrap();
    let a0 = frozen.coefficients();
    let live = bhapkar_godambe_project(phi, &pm, &[0.0, 1.0], &spec()).unwrap().with_refresh(true);
    live.eval(&Observation::Point(0.5), &[0.0, 2.0]).unwrap();
    let a1 = live.coefficients();
    // A scales like σ³ for this functional
    assert!((a1[(0, 0)] / a0[(0, 0)] - 8.0).abs() < 1e-6);
    frozen.eval(&Observation::Point(0.5), &[0.0, 2.0]).unwrap();
    assert_eq!(frozen.coefficients(), a0);
}
