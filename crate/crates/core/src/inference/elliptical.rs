//! Characteristic-function equations for elliptical data.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{central_jacobian, InferenceFunctional, Metadata};
use crate::error::{domain, Error, Result};
use crate::models::EllipticalModel;
use crate::observation::{Observation, OperatorKind};

/// `θ = (μ, Σ₁₁, Σ₂₁, Σ₂₂, Σ₃₁, …)`: location then the lower triangle by rows.
pub fn pack_params(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Vec<f64> {
    let k = mu.len();
    let mut out = mu.as_slice().to_vec();
    for i in 0..k {
        for j in 0..=i {
            out.push(sigma[(i, j)]);
        }
    }
    out
}

pub fn unpack_params(dim: usize, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if theta.len() != dim + dim * (dim + 1) / 2 {
        return Err(domain(format!("expected {} parameters for dimension {dim}", dim + dim * (dim + 1) / 2)));
    }
    let mu = DVector::from_column_slice(&theta[..dim]);
    let mut sigma = DMatrix::zeros(dim, dim);
    let mut idx = dim;
    for i in 0..dim {
        for j in 0..=i {
            sigma[(i, j)] = theta[idx];
            sigma[(j, i)] = theta[idx];
            idx += 1;
        }
    }
    Ok((mu, sigma))
}

/// Real and imaginary parts of `e^{iu_jᵀx} − e^{iu_jᵀμ} ψ(u_jᵀΣu_j)` for each frequency.
#[derive(Debug, Clone)]
pub struct EllipticalCf {
    model: EllipticalModel,
    frequencies: Vec<DVector<f64>>,
    meta: Metadata,
}

pub fn elliptical_cf_if(model: EllipticalModel, frequencies: Vec<Vec<f64>>) -> Result<EllipticalCf> {
    if frequencies.is_empty() {
        return Err(domain("at least one frequency is required"));
    }
    let k = model.dim();
    let frequencies: Vec<DVector<f64>> = frequencies
        .into_iter()
        .map(|u| {
            if u.len() != k || u.iter().all(|v| *v == 0.0) || u.iter().any(|v| !v.is_finite()) {
                Err(domain(format!("frequencies must be finite non-zero vectors of dimension {k}")))
            } else {
                Ok(DVector::from_vec(u))
            }
        })
        .collect::<Result<_>>()?;
    let meta = Metadata {
        name: format!("elliptical-cf({},m={})", model.name(), frequencies.len()),
        bounded: true,
        lipschitz_const: None,
        requires: OperatorKind::Point,
    };
    Ok(EllipticalCf { model, frequencies, meta })
}

impl EllipticalCf {
    pub fn centering(&self, theta: &[f64]) -> Result<Vec<Complex64>> {
        let (mu, sigma) = unpack_params(self.model.dim(), theta)?;
        self.frequencies.iter().map(|u| self.model.cf(u, &mu, &sigma)).collect()
    }

    fn empirical(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        if x.len() != self.model.dim() {
            return Err(Error::VariantMismatch(format!("expected a {}-vector", self.model.dim())));
        }
        let x = DVector::from_column_slice(x);
        Ok(self.frequencies.iter().map(|u| Complex64::from_polar(1.0, u.dot(&x))).collect())
    }

    fn flatten(values: impl Iterator<Item = Complex64>, len: usize) -> DVector<f64> {
        DVector::from_iterator(len, values.flat_map(|z| [z.re, z.im]))
    }

    fn centering_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        central_jacobian(|t| Ok(Self::flatten(self.centering(t)?.into_iter(), self.output_dim())), theta, self.output_dim())
    }
}

impl InferenceFunctional for EllipticalCf {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    fn param_dim(&self) -> usize {
        let k = self.model.dim();
        k + k * (k + 1) / 2
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let m = self.centering(theta)?;
        let e = self.empirical(y.vector()?)?;
        Ok(Self::flatten(e.into_iter().zip(m).map(|(a, b)| a - b), self.output_dim()))
    }

    fn eval_batch(&self, data: &[Observation], theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        let m = self.centering(theta)?;
        data.iter()
            .map(|y| {
                let e = self.empirical(y.vector()?)?;
                Ok(Self::flatten(e.into_iter().zip(&m).map(|(a, b)| a - b), self.output_dim()))
            })
            .collect()
    }

    fn d_theta(&self, _y: &Observation, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(-self.centering_jacobian(theta)?)
    }

    fn mean_d_theta(&self, data: &[Observation], theta: &[f64]) -> Result<DMatrix<f64>> {
        if data.is_empty() {
            return Err(Error::DegenerateData("empty sample".into()));
        }
        Ok(-self.centering_jacobian(theta)?)
    }
}
