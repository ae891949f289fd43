//! Numerical regularity diagnostics for a functional under an operator.

use nalgebra::DMatrix;

use super::{central_jacobian, InferenceFunctional, Population};
use crate::models::SharedModel;
use crate::observation::ObservationOperator;
use crate::specialfn::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityOptions {
    /// Half-width of the window scanned for roots of `θ ↦ E_{θ₀}[Ψ(Y, θ)]`.
    pub scan_half_width: f64,
    pub scan_points: usize,
    /// Bound on `|E_{θ₀}[Ψ(Y, θ₀)]|`.
    pub unbiased_tol: f64,
    /// Bound on the relative gap between `∂_θ E[Ψ]` and `E[∂_θΨ]`.
    pub interchange_tol: f64,
    pub spec: QuadratureSpec,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self {
            scan_half_width: 2.0,
            scan_points: 161,
            unbiased_tol: 1e-8,
            interchange_tol: 1e-4,
            spec: QuadratureSpec::default(),
        }
    }
}

/// Checks at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck {
    pub theta: Vec<f64>,
    /// `‖E_θ[Ψ(Y, θ)]‖∞`, `NaN` when it could not be computed.
    pub unbiasedness: f64,
    pub unbiased: bool,
    /// Sign changes of the first component along the first coordinate.
    pub roots: usize,
    pub unique_root: bool,
    pub variability: Option<DMatrix<f64>>,
    pub finite_variability: bool,
    /// `‖∂_θE[Ψ] − E[∂_θΨ]‖∞ / (1 + ‖E[∂_θΨ]‖∞)`.
    pub interchange_gap: f64,
    pub interchange_ok: bool,
    pub failures: Vec<String>,
}

impl PointCheck {
    pub fn passed(&self) -> bool {
        self.unbiased && self.unique_root && self.finite_variability && self.interchange_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub functional: String,
    pub operator: String,
    pub bounded: bool,
    pub points: Vec<PointCheck>,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(PointCheck::passed)
    }
}

fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| if v.is_nan() { f64::NAN } else { a.max(v.abs()) })
}

/// Runs the checks at each `θ` in `theta_grid`. Failures are recorded in the
/// report rather than returned as errors.
pub fn regularity_report(
    psi: &dyn InferenceFunctional,
    model: SharedModel,
    op: &ObservationOperator,
    theta_grid: &[Vec<f64>],
    options: &RegularityOptions,
) -> RegularityReport {
    let points = theta_grid.iter().map(|theta| check_point(psi, model.clone(), op, theta, options)).collect();
    RegularityReport {
        functional: psi.metadata().name.clone(),
        operator: op.label(),
        bounded: psi.metadata().bounded,
        points,
    }
}

fn check_point(
    psi: &dyn InferenceFunctional,
    model: SharedModel,
    op: &ObservationOperator,
    theta: &[f64],
    options: &RegularityOptions,
) -> PointCheck {
    let mut check = PointCheck {
        theta: theta.to_vec(),
        unbiasedness: f64::NAN,
        unbiased: false,
        roots: 0,
        unique_root: false,
        variability: None,
        finite_variability: false,
        interchange_gap: f64::NAN,
        interchange_ok: false,
        failures: Vec::new(),
    };
    let pop = match Population::new(model, theta, op.clone(), options.spec) {
        Ok(p) => p,
        Err(e) => {
            check.failures.push(format!("population: {e}"));
            return check;
        }
    };

    match pop.mean(psi, theta) {
        Ok(m) => {
            check.unbiasedness = m.amax();
            check.unbiased = check.unbiasedness <= options.unbiased_tol;
            if !check.unbiased {
                check.failures.push(format!("R2: |E[Ψ]| = {:e}", check.unbiasedness));
            }
        }
        Err(e) => check.failures.push(format!("R2: {e}")),
    }

    match root_scan(psi, &pop, theta, options) {
        Ok(n) => {
            check.roots = n;
            check.unique_root = n == 1;
            if n != 1 {
                check.failures.push(format!("R3: {n} sign changes in the scan window"));
            }
        }
        Err(e) => check.failures.push(format!("R3: {e}")),
    }

    match pop.variability(psi) {
        Ok(v) => {
            check.finite_variability = v.iter().all(|x| x.is_finite());
            if !check.finite_variability {
                check.failures.push("C4: variability is not finite".into());
            }
            check.variability = Some(v);
        }
        Err(e) => check.failures.push(format!("C4: {e}")),
    }

    let interchange = pop.jacobian(psi, theta).and_then(|inside| {
        let outside = central_jacobian(|t| pop.mean(psi, t), theta, psi.output_dim())?;
        Ok(sup_norm(&(&outside - &inside)) / (1.0 + sup_norm(&inside)))
    });
    match interchange {
        Ok(gap) => {
            check.interchange_gap = gap;
            check.interchange_ok = gap <= options.interchange_tol;
            if !check.interchange_ok {
                check.failures.push(format!("C5: interchange gap {gap:e}"));
            }
        }
        Err(e) => check.failures.push(format!("C5: {e}")),
    }
    check
}

/// Sign changes of `t ↦ E_{θ₀}[Ψ₁(Y, θ₀ + t e₁)]` on the scan window.
fn root_scan(
    psi: &dyn InferenceFunctional,
    pop: &Population,
    theta: &[f64],
    options: &RegularityOptions,
) -> crate::Result<usize> {
    let n = options.scan_points.max(3);
    let mut probe = theta.to_vec();
    let mut last_sign = 0.0;
    let mut changes = 0;
    let scale = 1e-12;
    for i in 0..n {
        let t = -options.scan_half_width + 2.0 * options.scan_half_width * i as f64 / (n - 1) as f64;
        probe[0] = theta[0] + t;
        if pop.model().check_theta(&probe).is_err() {
            continue;
        }
        let v = pop.mean(psi, &probe)?[0];
        if v.abs() <= scale {
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            changes += 1;
        }
        last_sign = s;
    }
    Ok(changes)
}
