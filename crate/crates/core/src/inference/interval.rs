//! Functionals of binned observations.

use nalgebra::DVector;

use super::{check_positive, diff_step, InferenceFunctional, Metadata, ThetaCache};
use crate::error::{Error, Result};
use crate::kernels::KernelProfile;
use crate::models::SharedModel;
use crate::observation::{interval_probability, BinGrid, Observation, OperatorKind};
use crate::specialfn::{integrate, integrate_fourier, Domain, QuadratureSpec, Trig};

/// Probability below which a bin is treated as empty.
pub const EMPTY_BIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalForm {
    /// `E[sin(c(X − μ)) | X ∈ b]`.
    Conditional,
    /// `∫_b sin(c(x − μ)) f_μ(x) φ(x) dx`, without normalisation.
    KernelWeighted(KernelProfile),
}

#[derive(Debug, Clone)]
pub struct IntervalSinusoidal {
    c: f64,
    model: SharedModel,
    grid: BinGrid,
    form: IntervalForm,
    spec: QuadratureSpec,
    table: ThetaCache<Vec<Option<f64>>>,
    meta: Metadata,
}

pub fn interval_sinusoidal(c: f64, model: SharedModel, grid: BinGrid, form: IntervalForm) -> Result<IntervalSinusoidal> {
    check_positive("sinusoidal tuning constant", c)?;
    grid.validate()?;
    if !model.has_density() {
        return Err(Error::MissingCapability("density"));
    }
    let label = match form {
        IntervalForm::Conditional => "conditional".to_string(),
        IntervalForm::KernelWeighted(k) => {
            k.validate()?;
            format!("weighted,{}", k.label())
        }
    };
    let meta = Metadata {
        name: format!("interval-sinusoidal(c={c},{label})"),
        bounded: true,
        lipschitz_const: None,
        requires: OperatorKind::Interval,
    };
    Ok(IntervalSinusoidal { c, model, grid, form, spec: QuadratureSpec::tight(), table: ThetaCache::new(), meta })
}

impl IntervalSinusoidal {
    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    /// `∫_lo^hi sin(c(x − μ)) f_θ(x) w(x) dx`.
    fn bin_integral(&self, theta: &[f64], lo: f64, hi: f64, kernel: &KernelProfile) -> Result<f64> {
        let (c, mu) = (self.c, theta[0]);
        let f = |x: f64| self.model.density(x, theta).unwrap_or(0.0);
        let g = |x: f64| (c * (x - mu)).sin() * f(x) * kernel.eval(x);
        if kernel.is_schwartz() || (lo.is_finite() && hi.is_finite()) {
            return Ok(integrate(&g, Domain::from_bounds(lo, hi), &self.spec)?.value);
        }
        // Open tails: expand sin(c(a ± y − μ)) and take the transforms on [0, ∞).
        let tail = |a: f64, dir: f64| -> Result<f64> {
            let h = |y: f64| f(a + dir * y);
            let cos_part = integrate_fourier(&h, c, Trig::Cos, &self.spec)?.value;
            let sin_part = integrate_fourier(&h, c, Trig::Sin, &self.spec)?.value;
            let (s, co) = (c * (a - mu)).sin_cos();
            Ok(s * cos_part + dir * co * sin_part)
        };
        match (lo.is_finite(), hi.is_finite()) {
            (true, false) => tail(lo, 1.0),
            (false, true) => tail(hi, -1.0),
            _ => {
                let m = self.model.center(theta);
                Ok(tail(m, 1.0)? + tail(m, -1.0)?)
            }
        }
    }

    /// Values per bin at `theta`; `None` marks an empty bin.
    fn values(&self, theta: &[f64]) -> Result<Vec<Option<f64>>> {
        self.table.get_or_try(theta, || {
            (0..self.grid.n_bins)
                .map(|k| {
                    let (lo, hi) = self.grid.bounds(k);
                    match self.form {
                        IntervalForm::Conditional => {
                            let p = interval_probability(&*self.model, theta, (lo, hi), &self.spec)?;
                            if p < EMPTY_BIN {
                                return Ok(None);
                            }
                            Ok(Some(self.bin_integral(theta, lo, hi, &KernelProfile::classical())? / p))
                        }
                        IntervalForm::KernelWeighted(kernel) => Ok(Some(self.bin_integral(theta, lo, hi, &kernel)?)),
                    }
                })
                .collect()
        })
    }
}

impl InferenceFunctional for IntervalSinusoidal {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let b = y.bin()?;
        if b >= self.grid.n_bins {
            return Err(Error::VariantMismatch(format!("bin {b} outside a grid of {} bins", self.grid.n_bins)));
        }
        let v = self.values(theta)?[b].ok_or(Error::EmptyBin(b))?;
        Ok(DVector::from_element(1, v))
    }
}

/// `∂_θ log p_b(θ)` for binned data.
#[derive(Debug, Clone)]
pub struct IntervalScore {
    model: SharedModel,
    grid: BinGrid,
    spec: QuadratureSpec,
    table: ThetaCache<Vec<DVector<f64>>>,
    meta: Metadata,
}

pub fn interval_score(model: SharedModel, grid: BinGrid) -> Result<IntervalScore> {
    grid.validate()?;
    let meta = Metadata {
        name: "interval-score".into(),
        bounded: false,
        lipschitz_const: None,
        requires: OperatorKind::Interval,
    };
    Ok(IntervalScore { model, grid, spec: QuadratureSpec::tight(), table: ThetaCache::new(), meta })
}

impl IntervalScore {
    fn probabilities(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (0..self.grid.n_bins).map(|k| interval_probability(&*self.model, theta, self.grid.bounds(k), &self.spec)).collect()
    }

    fn scores(&self, theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.table.get_or_try(theta, || {
            let p0 = self.probabilities(theta)?;
            let d = theta.len();
            let mut out = vec![DVector::zeros(d); self.grid.n_bins];
            let mut probe = theta.to_vec();
            for j in 0..d {
                let h = diff_step(theta[j]);
                probe[j] = theta[j] + h;
                let up = self.probabilities(&probe)?;
                probe[j] = theta[j] - h;
                let down = self.probabilities(&probe)?;
                probe[j] = theta[j];
                for k in 0..self.grid.n_bins {
                    out[k][j] = if p0[k] < EMPTY_BIN { f64::NAN } else { (up[k] - down[k]) / (2.0 * h * p0[k]) };
                }
            }
            Ok(out)
        })
    }
}

impl InferenceFunctional for IntervalScore {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        self.model.param_dim()
    }

    fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let b = y.bin()?;
        let scores = self.scores(theta)?;
        let s = scores.get(b).ok_or_else(|| Error::VariantMismatch(format!("bin {b} outside the grid")))?;
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::EmptyBin(b));
        }
        Ok(s.clone())
    }
}
