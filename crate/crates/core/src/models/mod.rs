//! Parametric model families: density, characteristic function, sampler and
//! score for univariate location, location-scale and mixture models, plus the
//! multivariate elliptical family.

mod elliptical;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Cauchy, ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::specialfn::{normal_cdf, radial_generator};

pub use elliptical::{elliptical, EllipticalKind, EllipticalModel};
pub(crate) use elliptical::spd_cholesky;

/// A parametric family `θ ↦ P_θ` on the real line.
///
/// Parameters are passed as slices of length [`ModelFamily::param_dim`].
pub trait ModelFamily: fmt::Debug + Send + Sync {
    fn name(&self) -> String;

    fn param_dim(&self) -> usize;

    /// Box constraints `(lower, upper)` per parameter (open bounds).
    fn param_domain(&self) -> Vec<(f64, f64)>;

    fn density(&self, x: f64, theta: &[f64]) -> Option<f64>;

    fn cf(&self, u: f64, theta: &[f64]) -> Complex64;

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64;

    /// `∂_θ log f_θ(x)`.
    fn score(&self, x: f64, theta: &[f64]) -> Option<DVector<f64>>;

    /// Distribution function, when available in closed form.
    fn cdf(&self, _x: f64, _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Point of symmetry or bulk of the law, used to anchor quadrature.
    fn center(&self, theta: &[f64]) -> f64;

    /// Scale of the bulk of the law, used to anchor quadrature.
    fn spread(&self, _theta: &[f64]) -> f64 {
        1.0
    }

    /// True when the law is symmetric about [`ModelFamily::center`].
    fn symmetric(&self, _theta: &[f64]) -> bool {
        false
    }

    fn has_density(&self) -> bool {
        true
    }

    fn has_score(&self) -> bool {
        true
    }

    /// Checks `theta` against the dimension and box constraints.
    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(domain(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.param_dim(),
                theta.len()
            )));
        }
        for (i, (&t, &(lo, hi))) in theta.iter().zip(self.param_domain().iter()).enumerate() {
            if !t.is_finite() || t <= lo || t >= hi {
                return Err(domain(format!("{}: parameter {i} = {t} outside ({lo}, {hi})", self.name())));
            }
        }
        Ok(())
    }
}

pub type SharedModel = Arc<dyn ModelFamily>;

/// Standardised symmetric base law `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Base {
    Normal,
    Cauchy,
    Student { nu: f64 },
}

impl Base {
    pub fn student(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(domain(format!("degrees of freedom must be positive, got {nu}")));
        }
        Ok(Base::Student { nu })
    }

    pub fn label(&self) -> String {
        match self {
            Base::Normal => "normal".into(),
            Base::Cauchy => "cauchy".into(),
            Base::Student { nu } => format!("t{nu}"),
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match *self {
            Base::Normal => (-0.5 * z * z).exp() / (2.0 * PI).sqrt(),
            Base::Cauchy => 1.0 / (PI * (1.0 + z * z)),
            Base::Student { nu } => {
                let log_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
                (log_norm - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()).exp()
            }
        }
    }

    /// `(log f)'(z)`.
    pub fn log_pdf_slope(&self, z: f64) -> f64 {
        match *self {
            Base::Normal => -z,
            Base::Cauchy => -2.0 * z / (1.0 + z * z),
            Base::Student { nu } => -(nu + 1.0) * z / (nu + z * z),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            Base::Normal => normal_cdf(z),
            Base::Cauchy => 0.5 + z.atan() / PI,
            Base::Student { nu } => {
                if z.is_infinite() {
                    return if z > 0.0 { 1.0 } else { 0.0 };
                }
                let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + z * z));
                if z > 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
        }
    }

    /// Characteristic function (real by symmetry).
    pub fn cf(&self, u: f64) -> f64 {
        match *self {
            Base::Normal => (-0.5 * u * u).exp(),
            Base::Cauchy => (-u.abs()).exp(),
            Base::Student { nu } => radial_generator(nu, u * u).expect("nu validated at construction"),
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            Base::Normal => StandardNormal.sample(rng),
            Base::Cauchy => Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng),
            Base::Student { nu } => {
                let z: f64 = StandardNormal.sample(rng);
                let chi = ChiSquared::new(nu).expect("nu validated at construction").sample(rng);
                z / (chi / nu).sqrt()
            }
        }
    }

    /// Location Fisher information of the standardised law, where known.
    pub fn location_fisher(&self) -> f64 {
        match *self {
            Base::Normal => 1.0,
            Base::Cauchy => 0.5,
            Base::Student { nu } => (nu + 1.0) / (nu + 3.0),
        }
    }
}

/// `X = θ + s·Z` with a fixed scale `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    base: Base,
    scale: f64,
}

pub fn gaussian_location(sigma: f64) -> Result<Location> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(Location { base: Base::Normal, scale: sigma })
}

pub fn cauchy_location() -> Location {
    Location { base: Base::Cauchy, scale: 1.0 }
}

pub fn student_t_location(nu: f64) -> Result<Location> {
    Ok(Location { base: Base::student(nu)?, scale: 1.0 })
}

impl Location {
    pub fn base(&self) -> Base {
        self.base
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl ModelFamily for Location {
    fn name(&self) -> String {
        match self.base {
            Base::Normal if self.scale == 1.0 => "normal".into(),
            Base::Normal => format!("normal(sigma={})", self.scale),
            _ => self.base.label(),
        }
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn param_domain(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY)]
    }

    fn density(&self, x: f64, theta: &[f64]) -> Option<f64> {
        Some(self.base.pdf((x - theta[0]) / self.scale) / self.scale)
    }

    fn cf(&self, u: f64, theta: &[f64]) -> Complex64 {
        Complex64::from_polar(self.base.cf(self.scale * u), u * theta[0])
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        theta[0] + self.scale * self.base.sample(rng)
    }

    fn score(&self, x: f64, theta: &[f64]) -> Option<DVector<f64>> {
        let z = (x - theta[0]) / self.scale;
        Some(DVector::from_element(1, -self.base.log_pdf_slope(z) / self.scale))
    }

    fn cdf(&self, x: f64, theta: &[f64]) -> Option<f64> {
        Some(self.base.cdf((x - theta[0]) / self.scale))
    }

    fn center(&self, theta: &[f64]) -> f64 {
        theta[0]
    }

    fn spread(&self, _theta: &[f64]) -> f64 {
        self.scale
    }

    fn symmetric(&self, _theta: &[f64]) -> bool {
        true
    }
}

/// `X = μ + σZ`, `θ = (μ, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScale {
    base: Base,
}

pub fn location_scale(base: Base) -> Result<LocationScale> {
    if let Base::Student { nu } = base {
        Base::student(nu)?;
    }
    Ok(LocationScale { base })
}

impl LocationScale {
    pub fn base(&self) -> Base {
        self.base
    }
}

impl ModelFamily for LocationScale {
    fn name(&self) -> String {
        format!("{}-location-scale", self.base.label())
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn param_domain(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)]
    }

    fn density(&self, x: f64, theta: &[f64]) -> Option<f64> {
        Some(self.base.pdf((x - theta[0]) / theta[1]) / theta[1])
    }

    fn cf(&self, u: f64, theta: &[f64]) -> Complex64 {
        Complex64::from_polar(self.base.cf(theta[1] * u), u * theta[0])
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        theta[0] + theta[1] * self.base.sample(rng)
    }

    fn score(&self, x: f64, theta: &[f64]) -> Option<DVector<f64>> {
        let s = theta[1];
        let z = (x - theta[0]) / s;
        let slope = self.base.log_pdf_slope(z);
        Some(DVector::from_vec(vec![-slope / s, (-1.0 - z * slope) / s]))
    }

    fn cdf(&self, x: f64, theta: &[f64]) -> Option<f64> {
        Some(self.base.cdf((x - theta[0]) / theta[1]))
    }

    fn center(&self, theta: &[f64]) -> f64 {
        theta[0]
    }

    fn spread(&self, theta: &[f64]) -> f64 {
        theta[1]
    }

    fn symmetric(&self, _theta: &[f64]) -> bool {
        true
    }
}

/// `π P₁ + (1 − π) P₂` with both components fixed; `θ = (π)`.
#[derive(Debug, Clone)]
pub struct Mixture {
    first: (SharedModel, Vec<f64>),
    second: (SharedModel, Vec<f64>),
}

pub fn two_component_mixture(
    p1: SharedModel,
    theta1: Vec<f64>,
    p2: SharedModel,
    theta2: Vec<f64>,
) -> Result<Mixture> {
    p1.check_theta(&theta1)?;
    p2.check_theta(&theta2)?;
    Ok(Mixture { first: (p1, theta1), second: (p2, theta2) })
}

impl Mixture {
    fn weights(theta: &[f64]) -> (f64, f64) {
        (theta[0], 1.0 - theta[0])
    }
}

impl ModelFamily for Mixture {
    fn name(&self) -> String {
        format!("mixture({}, {})", self.first.0.name(), self.second.0.name())
    }

    fn param_dim(&self) -> usize {
        1
    }

    // The closed interval [0, 1] is admissible for π; the open box is widened
    // slightly so that the degenerate mixtures pass `check_theta`.
    fn param_domain(&self) -> Vec<(f64, f64)> {
        vec![(-1e-12, 1.0 + 1e-12)]
    }

    fn density(&self, x: f64, theta: &[f64]) -> Option<f64> {
        let (a, b) = Self::weights(theta);
        let f1 = self.first.0.density(x, &self.first.1)?;
        let f2 = self.second.0.density(x, &self.second.1)?;
        Some(a * f1 + b * f2)
    }

    fn cf(&self, u: f64, theta: &[f64]) -> Complex64 {
        let (a, b) = Self::weights(theta);
        self.first.0.cf(u, &self.first.1) * a + self.second.0.cf(u, &self.second.1) * b
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let pick = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if pick < theta[0] {
            self.first.0.sample(&self.first.1, rng)
        } else {
            self.second.0.sample(&self.second.1, rng)
        }
    }

    fn score(&self, x: f64, theta: &[f64]) -> Option<DVector<f64>> {
        let f1 = self.first.0.density(x, &self.first.1)?;
        let f2 = self.second.0.density(x, &self.second.1)?;
        let f = theta[0] * f1 + (1.0 - theta[0]) * f2;
        Some(DVector::from_element(1, (f1 - f2) / f))
    }

    fn cdf(&self, x: f64, theta: &[f64]) -> Option<f64> {
        let (a, b) = Self::weights(theta);
        Some(a * self.first.0.cdf(x, &self.first.1)? + b * self.second.0.cdf(x, &self.second.1)?)
    }

    fn center(&self, _theta: &[f64]) -> f64 {
        0.5 * (self.first.0.center(&self.first.1) + self.second.0.center(&self.second.1))
    }

    fn spread(&self, _theta: &[f64]) -> f64 {
        let c1 = self.first.0.center(&self.first.1);
        let c2 = self.second.0.center(&self.second.1);
        0.5 * (c1 - c2).abs() + self.first.0.spread(&self.first.1).max(self.second.0.spread(&self.second.1))
    }

    fn has_density(&self) -> bool {
        self.first.0.has_density() && self.second.0.has_density()
    }

    fn has_score(&self) -> bool {
        self.has_density()
    }
}
