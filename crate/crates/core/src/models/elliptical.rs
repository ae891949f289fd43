use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specialfn::radial_generator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EllipticalKind {
    Gaussian,
    Student { nu: f64 },
}

/// Elliptical law on `ℝᵏ` with location `μ` and dispersion `Σ`:
/// `φ(u) = e^{iuᵀμ} ψ(uᵀΣu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalModel {
    kind: EllipticalKind,
    dim: usize,
}

pub fn elliptical(kind: EllipticalKind, dim: usize) -> Result<EllipticalModel> {
    if dim == 0 {
        return Err(domain("elliptical dimension must be at least 1"));
    }
    if let EllipticalKind::Student { nu } = kind {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(domain(format!("degrees of freedom must be positive, got {nu}")));
        }
    }
    Ok(EllipticalModel { kind, dim })
}

impl EllipticalModel {
    pub fn kind(&self) -> EllipticalKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> String {
        match self.kind {
            EllipticalKind::Gaussian => format!("gaussian-{}d", self.dim),
            EllipticalKind::Student { nu } => format!("t{nu}-{}d", self.dim),
        }
    }

    /// Radial generator `ψ(s)`.
    pub fn generator(&self, s: f64) -> f64 {
        match self.kind {
            EllipticalKind::Gaussian => (-0.5 * s).exp(),
            EllipticalKind::Student { nu } => radial_generator(nu, s).expect("nu validated at construction"),
        }
    }

    fn check(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
        if mu.len() != self.dim || sigma.nrows() != self.dim || sigma.ncols() != self.dim {
            return Err(domain(format!("expected dimension {}", self.dim)));
        }
        spd_cholesky(sigma)
    }

    pub fn cf(&self, u: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Complex64> {
        self.check(mu, sigma)?;
        if u.len() != self.dim {
            return Err(domain(format!("frequency must have dimension {}", self.dim)));
        }
        let q = (sigma * u).dot(u);
        Ok(Complex64::from_polar(self.generator(q), u.dot(mu)))
    }

    pub fn sample(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>, n: usize, rng: &mut dyn RngCore) -> Result<Vec<DVector<f64>>> {
        let chol = self.check(mu, sigma)?;
        let l = chol.l();
        let chi = match self.kind {
            EllipticalKind::Student { nu } => Some((nu, ChiSquared::new(nu).expect("nu validated"))),
            EllipticalKind::Gaussian => None,
        };
        Ok((0..n)
            .map(|_| {
                let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
                let scale = match &chi {
                    Some((nu, c)) => 1.0 / (c.sample(rng) / nu).sqrt(),
                    None => 1.0,
                };
                mu + &l * z * scale
            })
            .collect())
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, or an error.
pub(crate) fn spd_cholesky(sigma: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !sigma.is_square() {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{student_t_location, ModelFamily};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_generator() {
        let m = elliptical(EllipticalKind::Gaussian, 2).unwrap();
        assert!((m.generator(0.8) - (-0.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn one_dimension_reduces_to_univariate() {
        let m = elliptical(EllipticalKind::Student { nu: 3.0 }, 1).unwrap();
        let t3 = student_t_location(3.0).unwrap();
        let mu = DVector::from_element(1, 0.4);
        let sigma = DMatrix::from_element(1, 1, 1.0);
        for u in [0.3, 1.0, 2.5] {
            let a = m.cf(&DVector::from_element(1, u), &mu, &sigma).unwrap();
            let b = t3.cf(u, &[0.4]);
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite_dispersion() {
        let m = elliptical(EllipticalKind::Gaussian, 2).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mu = DVector::zeros(2);
        assert_eq!(m.cf(&mu, &mu, &bad), Err(Error::NotPositiveDefinite));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert_eq!(m.cf(&mu, &mu, &asym), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn student_sample_covariance() {
        // Cov = ν/(ν-2) Σ for ν > 2.
        let m = elliptical(EllipticalKind::Student { nu: 6.0 }, 2).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let mu = DVector::from_vec(vec![1.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let draws = m.sample(&mu, &sigma, n, &mut rng).unwrap();
        let mean = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
        let cov = draws.iter().fold(DMatrix::zeros(2, 2), |a, d| a + (d - &mean) * (d - &mean).transpose()) / n as f64;
        let expect = &sigma * 1.5;
        assert!((mean - mu).amax() < 0.02);
        assert!((cov - expect).amax() < 0.08);
    }
}
