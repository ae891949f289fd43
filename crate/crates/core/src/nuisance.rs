//! Nuisance parameters: projection of estimating functions onto the
//! complement of the nuisance scores, and orthogonality diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::inference::{score_if, InferenceFunctional, Metadata, Population, ScoreFunctional, SharedFunctional};
use crate::models::SharedModel;
use crate::observation::{Observation, ObservationOperator};
use crate::specialfn::QuadratureSpec;

/// A model whose parameter splits into interest `α` and nuisance `β` coordinates.
#[derive(Debug, Clone)]
pub struct PartitionedModel {
    model: SharedModel,
    interest: Vec<usize>,
    nuisance: Vec<usize>,
}

impl PartitionedModel {
    pub fn new(model: SharedModel, interest: Vec<usize>, nuisance: Vec<usize>) -> Result<Self> {
        let p = model.param_dim();
        let mut seen = vec![false; p];
        for &i in interest.iter().chain(&nuisance) {
            if i >= p {
                return Err(domain(format!("index {i} out of range for {p} parameters")));
            }
            if seen[i] {
                return Err(domain(format!("index {i} appears twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(domain("interest and nuisance indices must cover every parameter"));
        }
        if interest.is_empty() {
            return Err(domain("at least one interest parameter is required"));
        }
        Ok(Self { model, interest, nuisance })
    }

    pub fn model(&self) -> &SharedModel {
        &self.model
    }

    pub fn interest(&self) -> &[usize] {
        &self.interest
    }

    pub fn nuisance(&self) -> &[usize] {
        &self.nuisance
    }

    /// `U_α`.
    pub fn interest_score(&self) -> Result<ScoreBlock> {
        ScoreBlock::new(self.model.clone(), self.interest.clone())
    }

    /// `U_β`.
    pub fn nuisance_score(&self) -> Result<ScoreBlock> {
        ScoreBlock::new(self.model.clone(), self.nuisance.clone())
    }

    fn population(&self, theta: &[f64], spec: &QuadratureSpec) -> Result<Population> {
        Population::new(self.model.clone(), theta, ObservationOperator::Point, *spec)
    }
}

/// Selected rows of the model score.
pub struct ScoreBlock {
    score: ScoreFunctional,
    rows: Vec<usize>,
    meta: Metadata,
}

impl ScoreBlock {
    fn new(model: SharedModel, rows: Vec<usize>) -> Result<Self> {
        let score = score_if(model)?;
        let meta = Metadata { name: format!("score{rows:?}"), ..score.metadata().clone() };
        Ok(Self { score, rows, meta })
    }
}

impl InferenceFunctional for ScoreBlock {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        self.rows.len()
    }

    fn param_dim(&self) -> usize {
        self.score.param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let full = self.score.eval(y, theta)?;
        Ok(DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&i| full[i])))
    }
}

/// `E[ΦU_βᵀ](E[U_βU_βᵀ])⁻¹` under `P_θ`.
pub fn projection_coefficients(phi: &dyn InferenceFunctional, pm: &PartitionedModel, theta: &[f64], spec: &QuadratureSpec) -> Result<DMatrix<f64>> {
    if pm.nuisance.is_empty() {
        return Ok(DMatrix::zeros(phi.output_dim(), 0));
    }
    let pop = pm.population(theta, spec)?;
    let ub = pm.nuisance_score()?;
    let cross = pop.cross(phi, &ub, theta)?;
    let info = pop.second_moment(&ub, theta)?;
    let inv = info.cholesky().map(|c| c.inverse()).ok_or(Error::SingularNuisance)?;
    Ok(cross * inv)
}

/// `ψ* = Φ − A U_β` with `A` from [`projection_coefficients`].
pub struct Projected {
    phi: SharedFunctional,
    pm: PartitionedModel,
    spec: QuadratureSpec,
    coefficients: std::sync::Mutex<(Vec<f64>, DMatrix<f64>)>,
    refresh: bool,
    nuisance_score: ScoreBlock,
    meta: Metadata,
}

/// Projects `phi` at `theta` with the coefficients frozen there.
pub fn bhapkar_godambe_project(phi: SharedFunctional, pm: &PartitionedModel, theta: &[f64], spec: &QuadratureSpec) -> Result<Projected> {
    if phi.param_dim() != pm.model.param_dim() {
        return Err(domain("functional and model parameter dimensions differ"));
    }
    let a = projection_coefficients(&*phi, pm, theta, spec)?;
    let meta = Metadata { name: format!("{}-projected", phi.metadata().name), bounded: false, ..phi.metadata().clone() };
    Ok(Projected {
        nuisance_score: pm.nuisance_score()?,
        phi,
        pm: pm.clone(),
        spec: *spec,
        coefficients: std::sync::Mutex::new((theta.to_vec(), a)),
        refresh: false,
        meta,
    })
}

impl Projected {
    /// Recompute the coefficients at every new `θ` passed to `eval`.
    pub fn with_refresh(mut self, refresh: bool) -> Self {
        self.refresh = refresh;
        self
    }

    /// Re-freeze the coefficients at `theta`.
    pub fn refresh_at(&self, theta: &[f64]) -> Result<()> {
        let a = projection_coefficients(&*self.phi, &self.pm, theta, &self.spec)?;
        *self.coefficients.lock().expect("coefficient lock") = (theta.to_vec(), a);
        Ok(())
    }

    pub fn coefficients(&self) -> DMatrix<f64> {
        self.coefficients.lock().expect("coefficient lock").1.clone()
    }

    fn coefficients_for(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        if self.refresh && self.coefficients.lock().expect("coefficient lock").0 != theta {
            self.refresh_at(theta)?;
        }
        Ok(self.coefficients())
    }
}

impl InferenceFunctional for Projected {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        self.phi.output_dim()
    }

    fn param_dim(&self) -> usize {
        self.phi.param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let a = self.coefficients_for(theta)?;
        let phi = self.phi.eval(y, theta)?;
        if a.ncols() == 0 {
            return Ok(phi);
        }
        Ok(phi - a * self.nuisance_score.eval(y, theta)?)
    }
}

/// Worst `|E_θ[ψ_i U_{β_j}]|` over `theta_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    /// `q × |β|` maxima.
    pub residuals: DMatrix<f64>,
    /// Grid point attaining the overall maximum.
    pub worst_theta: Vec<f64>,
}

impl OrthogonalityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn orthogonality_check(
    psi: &dyn InferenceFunctional,
    pm: &PartitionedModel,
    theta_grid: &[Vec<f64>],
    spec: &QuadratureSpec,
) -> Result<OrthogonalityReport> {
    let ub = pm.nuisance_score()?;
    let mut residuals = DMatrix::zeros(psi.output_dim(), pm.nuisance.len());
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    for theta in theta_grid {
        let pop = pm.population(theta, spec)?;
        let cross = pop.cross(psi, &ub, theta)?.abs();
        let m = cross.iter().copied().fold(0.0, f64::max);
        if m > worst.0 {
            worst = (m, theta.clone());
        }
        residuals.zip_apply(&cross, |r: &mut f64, c| *r = r.max(c));
    }
    Ok(OrthogonalityReport { residuals, worst_theta: worst.1 })
}

/// `J = SᵀV⁻¹S` over the interest block, with `S = −E[∂_α ψ]`.
pub fn nuisance_godambe(psi: &dyn InferenceFunctional, pm: &PartitionedModel, theta: &[f64], spec: &QuadratureSpec) -> Result<DMatrix<f64>> {
    let pop = pm.population(theta, spec)?;
    let full = pop.sensitivity(psi)?;
    let s = full.select_columns(&pm.interest);
    let v = pop.variability(psi)?;
    let vinv = v.cholesky().map(|c| c.inverse()).ok_or(Error::SingularVariability)?;
    let j = s.transpose() * vinv * &s;
    Ok((&j + j.transpose()) * 0.5)
}

#[cfg(test)]
mod tests;
