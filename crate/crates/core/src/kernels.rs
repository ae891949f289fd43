//! Kernel profiles and the distributional pairing `⟨T_θ, ψφ⟩`: weak moments,
//! the weak characteristic function and weak cumulants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::ModelFamily;
use crate::specialfn::{integrate_fourier, integrate_split, QuadratureSpec, Trig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum KernelShape {
    Gaussian { sigma_phi: f64 },
    /// `φ ≡ 1`; not a Schwartz function.
    ClassicalLimit,
}

/// `φ(x) = exp(-(x - center)² / (2σ_φ²))`, or the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub shape: KernelShape,
    #[serde(default)]
    pub center: f64,
}

impl Default for KernelProfile {
    fn default() -> Self {
        Self::classical()
    }
}

impl KernelProfile {
    pub fn gaussian(sigma_phi: f64) -> Result<Self> {
        if !(sigma_phi > 0.0) || !sigma_phi.is_finite() {
            return Err(domain(format!("kernel width must be positive, got {sigma_phi}")));
        }
        Ok(Self { shape: KernelShape::Gaussian { sigma_phi }, center: 0.0 })
    }

    pub fn classical() -> Self {
        Self { shape: KernelShape::ClassicalLimit, center: 0.0 }
    }

    pub fn centered_at(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelShape::Gaussian { sigma_phi } = self.shape {
            Self::gaussian(sigma_phi)?;
        }
        if !self.center.is_finite() {
            return Err(domain("kernel center must be finite"));
        }
        Ok(())
    }

    pub fn is_classical(&self) -> bool {
        matches!(self.shape, KernelShape::ClassicalLimit)
    }

    pub fn is_schwartz(&self) -> bool {
        !self.is_classical()
    }

    pub fn sigma_phi(&self) -> Option<f64> {
        match self.shape {
            KernelShape::Gaussian { sigma_phi } => Some(sigma_phi),
            KernelShape::ClassicalLimit => None,
        }
    }

    pub fn label(&self) -> String {
        match self.shape {
            KernelShape::Gaussian { sigma_phi } if self.center == 0.0 => format!("gaussian({sigma_phi})"),
            KernelShape::Gaussian { sigma_phi } => format!("gaussian({sigma_phi}@{})", self.center),
            KernelShape::ClassicalLimit => "classical".into(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian { sigma_phi } => {
                let z = (x - self.center) / sigma_phi;
                (-0.5 * z * z).exp()
            }
            KernelShape::ClassicalLimit => 1.0,
        }
    }

    /// `φᵖ` for `p ≥ 1`, itself a kernel of the same family.
    pub fn power(&self, p: u32) -> Self {
        match self.shape {
            KernelShape::Gaussian { sigma_phi } if p > 0 => Self {
                shape: KernelShape::Gaussian { sigma_phi: sigma_phi / (p as f64).sqrt() },
                center: self.center,
            },
            _ => Self::classical(),
        }
    }

    /// `φ₁φ₂ = a·φ₃`, returned as `(φ₃, a)`.
    pub fn product(&self, other: &Self) -> (Self, f64) {
        match (self.shape, other.shape) {
            (KernelShape::ClassicalLimit, _) => (*other, 1.0),
            (_, KernelShape::ClassicalLimit) => (*self, 1.0),
            (KernelShape::Gaussian { sigma_phi: s1 }, KernelShape::Gaussian { sigma_phi: s2 }) => {
                let (p1, p2) = (1.0 / (s1 * s1), 1.0 / (s2 * s2));
                let precision = p1 + p2;
                let center = (p1 * self.center + p2 * other.center) / precision;
                let gap = self.center - other.center;
                let amplitude = (-0.5 * gap * gap / (s1 * s1 + s2 * s2)).exp();
                (
                    Self { shape: KernelShape::Gaussian { sigma_phi: precision.sqrt().recip() }, center },
                    amplitude,
                )
            }
        }
    }
}

/// Test function paired against `T_θ φ`.
pub enum TestFunction<'a> {
    Real(&'a dyn Fn(f64) -> f64),
    Complex(&'a dyn Fn(f64) -> Complex64),
    /// `x ↦ e^{iux}`; under the classical limit the model's characteristic
    /// function is used directly.
    Exponential(f64),
}

/// Points splitting the real line for quadrature of `g φ f_θ`.
pub(crate) fn anchors(model: &dyn ModelFamily, theta: &[f64], kernel: &KernelProfile) -> Vec<f64> {
    let c = model.center(theta);
    let s = model.spread(theta);
    let mut pts = vec![c - s, c, c + s];
    if let Some(sp) = kernel.sigma_phi() {
        pts.extend([kernel.center - sp, kernel.center, kernel.center + sp]);
    }
    pts
}

fn require_density(model: &dyn ModelFamily, theta: &[f64]) -> Result<()> {
    if !model.has_density() || model.density(model.center(theta), theta).is_none() {
        return Err(Error::UnsupportedPairing(format!(
            "{} has no density and the test function is not an exponential under the classical limit",
            model.name()
        )));
    }
    Ok(())
}

/// `∫ g(x) φ(x) f_θ(x) dx` by quadrature.
pub(crate) fn weighted_integral(
    model: &dyn ModelFamily,
    theta: &[f64],
    g: &dyn Fn(f64) -> f64,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
) -> Result<f64> {
    require_density(model, theta)?;
    let h = |x: f64| {
        let w = kernel.eval(x);
        if w == 0.0 {
            return 0.0;
        }
        g(x) * w * model.density(x, theta).unwrap_or(0.0)
    };
    Ok(integrate_split(&h, &anchors(model, theta, kernel), spec)?.value)
}

/// `∫ e^{iωx} φ(x) f_θ(x) dx`.
///
/// Under the classical limit the integrand has no decay beyond that of the
/// density, so the transform is taken cycle by cycle on each half-line
/// around the center of the law.
pub fn fourier_pairing(
    model: &dyn ModelFamily,
    theta: &[f64],
    omega: f64,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    require_density(model, theta)?;
    if omega == 0.0 {
        return Ok(weighted_integral(model, theta, &|_| 1.0, kernel, spec)?.into());
    }
    if kernel.is_schwartz() {
        let re = weighted_integral(model, theta, &|x| (omega * x).cos(), kernel, spec)?;
        let im = weighted_integral(model, theta, &|x| (omega * x).sin(), kernel, spec)?;
        return Ok(Complex64::new(re, im));
    }
    let (w, sign) = if omega < 0.0 { (-omega, -1.0) } else { (omega, 1.0) };
    let s = model.center(theta);
    let h = |x: f64| model.density(x, theta).unwrap_or(0.0);
    let even = |y: f64| h(s + y) + h(s - y);
    let re = integrate_fourier(&even, w, Trig::Cos, spec)?.value;
    let im = if model.symmetric(theta) {
        0.0
    } else {
        let odd = |y: f64| h(s + y) - h(s - y);
        integrate_fourier(&odd, w, Trig::Sin, spec)?.value
    };
    Ok(Complex64::from_polar(1.0, omega * s) * Complex64::new(re, sign * im))
}

/// `⟨T_θ, ψφ⟩`.
pub fn pairing(
    model: &dyn ModelFamily,
    theta: &[f64],
    psi: TestFunction<'_>,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    model.check_theta(theta)?;
    kernel.validate()?;
    match psi {
        TestFunction::Exponential(u) if kernel.is_classical() => Ok(model.cf(u, theta)),
        TestFunction::Exponential(u) => fourier_pairing(model, theta, u, kernel, spec),
        TestFunction::Real(g) => Ok(weighted_integral(model, theta, g, kernel, spec)?.into()),
        TestFunction::Complex(g) => {
            let re = weighted_integral(model, theta, &|x| g(x).re, kernel, spec)?;
            let im = weighted_integral(model, theta, &|x| g(x).im, kernel, spec)?;
            Ok(Complex64::new(re, im))
        }
    }
}

/// `⁽φ⁾m_n(θ) = ⟨T_θ, xⁿφ⟩`.
pub fn weak_moment(
    model: &dyn ModelFamily,
    theta: &[f64],
    n: u32,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let g = move |x: f64| x.powi(n as i32);
    Ok(pairing(model, theta, TestFunction::Real(&g), kernel, spec)?.re)
}

/// `⁽φ⁾φ_θ(t) = ⟨T_θ, e^{it·}φ⟩`.
pub fn weak_cf(
    model: &dyn ModelFamily,
    theta: &[f64],
    t: f64,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    pairing(model, theta, TestFunction::Exponential(t), kernel, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantEstimate {
    /// `κ₁, …, κ_max` (index 0 holds κ₁).
    pub values: Vec<f64>,
    /// Discarded component of each finite-difference derivative after division by `iⁿ`.
    pub residues: Vec<f64>,
}

pub const MAX_CUMULANT_ORDER: usize = 4;
const RESIDUE_LIMIT: f64 = 1e-6;

/// `⁽φ⁾κ_n`, `n = 1..=max_order`, by central differences of the principal
/// logarithm of the weak characteristic function with one Richardson step.
///
/// Orders 1 and 2 use `step`; orders 3 and 4 use `10·step` and `100·step`
/// to keep quadrature noise below the truncation error.
pub fn weak_cumulants(
    model: &dyn ModelFamily,
    theta: &[f64],
    max_order: usize,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
    step: f64,
) -> Result<CumulantEstimate> {
    if max_order == 0 || max_order > MAX_CUMULANT_ORDER {
        return Err(domain(format!("cumulant order must be in 1..={MAX_CUMULANT_ORDER}, got {max_order}")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(domain(format!("finite-difference step must be positive, got {step}")));
    }
    let fine = QuadratureSpec::tight().scaled(10.0).min_with(spec);
    let cf = |t: f64| weak_cf(model, theta, t, kernel, &fine);
    let origin = cf(0.0)?;
    if origin.norm() < 1e-12 {
        return Err(Error::DegenerateCf(origin.norm()));
    }
    let log_cf = |t: f64| -> Result<Complex64> { Ok(if t == 0.0 { origin.ln() } else { cf(t)?.ln() }) };

    let mut values = Vec::with_capacity(max_order);
    let mut residues = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        let h = step * 10f64.powi(order.saturating_sub(2) as i32);
        let d = |h: f64| -> Result<Complex64> {
            let f = |k: f64| log_cf(k * h);
            Ok(match order {
                1 => (f(1.0)? - f(-1.0)?) / (2.0 * h),
                2 => (f(1.0)? - f(0.0)? * 2.0 + f(-1.0)?) / (h * h),
                3 => (f(2.0)? - f(1.0)? * 2.0 + f(-1.0)? * 2.0 - f(-2.0)?) / (2.0 * h * h * h),
                _ => (f(2.0)? - f(1.0)? * 4.0 + f(0.0)? * 6.0 - f(-1.0)? * 4.0 + f(-2.0)?) / h.powi(4),
            })
        };
        let coarse = d(h)?;
        let refined = d(0.5 * h)?;
        let derivative = (refined * 4.0 - coarse) / 3.0;
        // κ_n = D / iⁿ
        let kappa = derivative / Complex64::i().powu(order as u32);
        values.push(kappa.re);
        residues.push(kappa.im.abs());
    }
    Ok(CumulantEstimate { values, residues })
}

impl CumulantEstimate {
    /// True when every discarded residue is below the reporting threshold.
    pub fn clean(&self) -> bool {
        self.residues.iter().all(|r| *r < RESIDUE_LIMIT)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakSummary {
    pub moments: Vec<f64>,
    pub cf_grid: Vec<(f64, Complex64)>,
    pub cumulants: Vec<f64>,
}

pub fn weak_summary(
    model: &dyn ModelFamily,
    theta: &[f64],
    max_moment: u32,
    t_grid: &[f64],
    max_cumulant: usize,
    kernel: &KernelProfile,
    spec: &QuadratureSpec,
) -> Result<WeakSummary> {
    let moments = (0..=max_moment)
        .map(|n| weak_moment(model, theta, n, kernel, spec))
        .collect::<Result<Vec<_>>>()?;
    let cf_grid = t_grid
        .iter()
        .map(|&t| Ok((t, weak_cf(model, theta, t, kernel, spec)?)))
        .collect::<Result<Vec<_>>>()?;
    let cumulants = if max_cumulant == 0 {
        Vec::new()
    } else {
        weak_cumulants(model, theta, max_cumulant, kernel, spec, 1e-3)?.values
    };
    Ok(WeakSummary { moments, cf_grid, cumulants })
}

#[cfg(test)]
mod tests;
