//! Inference functionals `Ψ(y, θ)`: constructors, parameter derivatives and
//! population expectations under an observation operator.

mod elliptical;
mod interval;
mod population;
mod regularity;
pub mod trig;

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::kernels::{weak_cf, weak_moment, KernelProfile};
use crate::models::SharedModel;
use crate::observation::{Observation, OperatorKind};
use crate::specialfn::QuadratureSpec;

pub use elliptical::{elliptical_cf_if, pack_params, unpack_params, EllipticalCf};
pub use interval::{interval_score, interval_sinusoidal, IntervalForm, IntervalScore, IntervalSinusoidal};
pub use population::{Population, Route};
pub use regularity::{regularity_report, PointCheck, RegularityOptions, RegularityReport};
pub use trig::{TrigAtom, TrigForm};

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub name: String,
    pub bounded: bool,
    pub lipschitz_const: Option<f64>,
    pub requires: OperatorKind,
}

/// Relative step of the central differences used for θ-derivatives.
pub const DIFF_STEP: f64 = 1e-5;

pub(crate) fn diff_step(t: f64) -> f64 {
    DIFF_STEP * (1.0 + t.abs())
}

/// Central-difference Jacobian of `f` at `theta` (`rows × θ.len()`).
pub fn central_jacobian<F>(f: F, theta: &[f64], rows: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let mut jac = DMatrix::zeros(rows, theta.len());
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let h = diff_step(theta[j]);
        probe[j] = theta[j] + h;
        let up = f(&probe)?;
        probe[j] = theta[j] - h;
        let down = f(&probe)?;
        probe[j] = theta[j];
        jac.set_column(j, &((up - down) / (2.0 * h)));
    }
    Ok(jac)
}

/// `Ψ(y, θ)` with values in `ℝ^q`.
pub trait InferenceFunctional: Send + Sync {
    fn metadata(&self) -> &Metadata;

    fn output_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>>;

    /// `∂_θ Ψ(y, θ)`, `q × p`.
    fn d_theta(&self, y: &Observation, theta: &[f64]) -> Result<DMatrix<f64>> {
        central_jacobian(|t| self.eval(y, t), theta, self.output_dim())
    }

    fn eval_batch(&self, data: &[Observation], theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        data.iter().map(|y| self.eval(y, theta)).collect()
    }

    /// `Ψ̄_n(θ)`.
    fn mean(&self, data: &[Observation], theta: &[f64]) -> Result<DVector<f64>> {
        if data.is_empty() {
            return Err(Error::DegenerateData("empty sample".into()));
        }
        let values = self.eval_batch(data, theta)?;
        Ok(values.iter().fold(DVector::zeros(self.output_dim()), |acc, v| acc + v) / data.len() as f64)
    }

    /// `n⁻¹ Σ ∂_θ Ψ(Y_i, θ)`.
    fn mean_d_theta(&self, data: &[Observation], theta: &[f64]) -> Result<DMatrix<f64>> {
        central_jacobian(|t| self.mean(data, t), theta, self.output_dim())
    }

    /// Representation as a trigonometric polynomial in a real observation.
    fn trig_form(&self, _theta: &[f64]) -> Option<TrigForm> {
        None
    }

    /// One trigonometric form per parameter for `∂_{θ_j} Ψ`.
    fn trig_form_jacobian(&self, theta: &[f64]) -> Option<Vec<TrigForm>> {
        let mut probe = theta.to_vec();
        (0..theta.len())
            .map(|j| {
                let h = diff_step(theta[j]);
                probe[j] = theta[j] + h;
                let up = self.trig_form(&probe)?;
                probe[j] = theta[j] - h;
                let down = self.trig_form(&probe)?;
                probe[j] = theta[j];
                up.difference_quotient(&down, 2.0 * h)
            })
            .collect()
    }
}

pub type SharedFunctional = Arc<dyn InferenceFunctional>;

/// Per-θ memo for quantities that are expensive to recompute.
#[derive(Debug, Default)]
pub(crate) struct ThetaCache<T: Clone> {
    slot: Mutex<Option<(Vec<f64>, T)>>,
}

impl<T: Clone> ThetaCache<T> {
    pub(crate) fn new() -> Self {
        Self { slot: Mutex::new(None) }
    }

    pub(crate) fn get_or_try<F: FnOnce() -> Result<T>>(&self, theta: &[f64], compute: F) -> Result<T> {
        if let Some((t, v)) = self.slot.lock().expect("cache lock").as_ref() {
            if t.as_slice() == theta {
                return Ok(v.clone());
            }
        }
        let value = compute()?;
        *self.slot.lock().expect("cache lock") = Some((theta.to_vec(), value.clone()));
        Ok(value)
    }
}

impl<T: Clone> Clone for ThetaCache<T> {
    fn clone(&self) -> Self {
        Self { slot: Mutex::new(self.slot.lock().expect("cache lock").clone()) }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// `ψ_c(x, θ) = sin(c(x − θ₀)) φ(x)`, depending on the first parameter only.
#[derive(Debug, Clone)]
pub struct Sinusoidal {
    c: f64,
    kernel: KernelProfile,
    param_dim: usize,
    meta: Metadata,
}

pub fn sinusoidal(c: f64) -> Result<Sinusoidal> {
    sinusoidal_weighted(c, KernelProfile::classical())
}

pub fn sinusoidal_weighted(c: f64, kernel: KernelProfile) -> Result<Sinusoidal> {
    check_positive("sinusoidal tuning constant", c)?;
    kernel.validate()?;
    let name = if kernel.is_classical() { format!("sinusoidal(c={c})") } else { format!("sinusoidal(c={c},{})", kernel.label()) };
    Ok(Sinusoidal {
        c,
        kernel,
        param_dim: 1,
        meta: Metadata { name, bounded: true, lipschitz_const: Some(c), requires: OperatorKind::Point },
    })
}

impl Sinusoidal {
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Same functional for a model with `p` parameters (the first is the location).
    pub fn with_param_dim(mut self, p: usize) -> Self {
        self.param_dim = p.max(1);
        self
    }

    fn power(&self) -> u32 {
        u32::from(self.kernel.is_schwartz())
    }
}

impl InferenceFunctional for Sinusoidal {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let x = y.value()?;
        Ok(DVector::from_element(1, (self.c * (x - theta[0])).sin() * self.kernel.eval(x)))
    }

    fn d_theta(&self, y: &Observation, theta: &[f64]) -> Result<DMatrix<f64>> {
        let x = y.value()?;
        let mut d = DMatrix::zeros(1, self.param_dim);
        d[(0, 0)] = -self.c * (self.c * (x - theta[0])).cos() * self.kernel.eval(x);
        Ok(d)
    }

    fn mean_d_theta(&self, data: &[Observation], theta: &[f64]) -> Result<DMatrix<f64>> {
        if data.is_empty() {
            return Err(Error::DegenerateData("empty sample".into()));
        }
        let mut acc = DMatrix::zeros(1, self.param_dim);
        for y in data {
            acc += self.d_theta(y, theta)?;
        }
        Ok(acc / data.len() as f64)
    }

    fn trig_form(&self, theta: &[f64]) -> Option<TrigForm> {
        let (s, c) = (self.c * theta[0]).sin_cos();
        // sin(c(x−θ)) = sin(cx)cos(cθ) − cos(cx)sin(cθ)
        let atom = TrigAtom { omega: self.c, power: self.power(), cos: -s, sin: c };
        Some(TrigForm::new(self.kernel, vec![vec![atom]]))
    }

    fn trig_form_jacobian(&self, theta: &[f64]) -> Option<Vec<TrigForm>> {
        let (s, c) = (self.c * theta[0]).sin_cos();
        // −c cos(c(x−θ)) = −c[cos(cx)cos(cθ) + sin(cx)sin(cθ)]
        let first = TrigAtom { omega: self.c, power: self.power(), cos: -self.c * c, sin: -self.c * s };
        let mut forms = vec![TrigForm::new(self.kernel, vec![vec![first]])];
        forms.extend((1..self.param_dim).map(|_| TrigForm::new(self.kernel, vec![vec![]])));
        Some(forms)
    }
}

/// The model score `∂_θ log f_θ(x)`.
#[derive(Debug, Clone)]
pub struct ScoreFunctional {
    model: SharedModel,
    meta: Metadata,
}

pub fn score_if(model: SharedModel) -> Result<ScoreFunctional> {
    if !model.has_score() || model.score(model.center(&default_theta(&*model)), &default_theta(&*model)).is_none() {
        return Err(Error::MissingCapability("score"));
    }
    let meta = Metadata { name: "score".into(), bounded: false, lipschitz_const: None, requires: OperatorKind::Point };
    Ok(ScoreFunctional { model, meta })
}

/// A parameter point inside the model's box, used for capability probes.
fn default_theta(model: &dyn crate::models::ModelFamily) -> Vec<f64> {
    model
        .param_domain()
        .iter()
        .map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

impl InferenceFunctional for ScoreFunctional {
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
        self.model.score(y.value()?, theta).ok_or(Error::MissingCapability("score"))
    }
}

/// `ψ_k(x, θ) = xᵏφ(x) − ⁽φ⁾m_k(θ)`.
#[derive(Debug, Clone)]
pub struct WeakMomentFunctional {
    k: u32,
    kernel: KernelProfile,
    model: SharedModel,
    spec: QuadratureSpec,
    centering: ThetaCache<f64>,
    meta: Metadata,
}

pub fn weak_moment_if(k: u32, kernel: KernelProfile, model: SharedModel) -> Result<WeakMomentFunctional> {
    if k == 0 {
        return Err(domain("weak moment order must be at least 1"));
    }
    kernel.validate()?;
    let meta = Metadata {
        name: format!("weak-moment(k={k},{})", kernel.label()),
        bounded: kernel.is_schwartz(),
        lipschitz_const: None,
        requires: OperatorKind::Point,
    };
    Ok(WeakMomentFunctional { k, kernel, model, spec: QuadratureSpec::tight(), centering: ThetaCache::new(), meta })
}

impl WeakMomentFunctional {
    fn centering(&self, theta: &[f64]) -> Result<f64> {
        self.centering.get_or_try(theta, || weak_moment(&*self.model, theta, self.k, &self.kernel, &self.spec))
    }
}

impl InferenceFunctional for WeakMomentFunctional {
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
        let x = y.value()?;
        Ok(DVector::from_element(1, x.powi(self.k as i32) * self.kernel.eval(x) - self.centering(theta)?))
    }
}

/// `(Re, Im)` of `e^{iux}φ(x) − ⁽φ⁾φ_θ(u)`.
#[derive(Debug, Clone)]
pub struct WeakCfFunctional {
    u: f64,
    kernel: KernelProfile,
    model: SharedModel,
    spec: QuadratureSpec,
    centering: ThetaCache<Complex64>,
    meta: Metadata,
}

pub fn weak_cf_if(u: f64, kernel: KernelProfile, model: SharedModel) -> Result<WeakCfFunctional> {
    if u == 0.0 || !u.is_finite() {
        return Err(domain(format!("frequency must be finite and non-zero, got {u}")));
    }
    kernel.validate()?;
    let meta = Metadata {
        name: format!("weak-cf(u={u},{})", kernel.label()),
        bounded: true,
        lipschitz_const: None,
        requires: OperatorKind::Point,
    };
    Ok(WeakCfFunctional { u, kernel, model, spec: QuadratureSpec::tight(), centering: ThetaCache::new(), meta })
}

impl WeakCfFunctional {
    pub fn centering(&self, theta: &[f64]) -> Result<Complex64> {
        self.centering.get_or_try(theta, || weak_cf(&*self.model, theta, self.u, &self.kernel, &self.spec))
    }
}

impl InferenceFunctional for WeakCfFunctional {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let x = y.value()?;
        let z = Complex64::from_polar(self.kernel.eval(x), self.u * x) - self.centering(theta)?;
        Ok(DVector::from_vec(vec![z.re, z.im]))
    }

    fn eval_batch(&self, data: &[Observation], theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        let m = self.centering(theta)?;
        data.iter()
            .map(|y| {
                let x = y.value()?;
                let z = Complex64::from_polar(self.kernel.eval(x), self.u * x) - m;
                Ok(DVector::from_vec(vec![z.re, z.im]))
            })
            .collect()
    }

    fn trig_form(&self, theta: &[f64]) -> Option<TrigForm> {
        let m = self.centering(theta).ok()?;
        let p = u32::from(self.kernel.is_schwartz());
        Some(TrigForm::new(
            self.kernel,
            vec![
                vec![TrigAtom { omega: self.u, power: p, cos: 1.0, sin: 0.0 }, TrigAtom::constant(-m.re)],
                vec![TrigAtom { omega: self.u, power: p, cos: 0.0, sin: 1.0 }, TrigAtom::constant(-m.im)],
            ],
        ))
    }
}

/// Several functionals stacked into one (for GMM).
#[derive(Clone)]
pub struct Stacked {
    parts: Vec<SharedFunctional>,
    meta: Metadata,
}

pub fn stack(parts: Vec<SharedFunctional>) -> Result<Stacked> {
    let Some(first) = parts.first() else {
        return Err(domain("cannot stack an empty list of functionals"));
    };
    let p = first.param_dim();
    if parts.iter().any(|f| f.param_dim() != p) {
        return Err(domain("stacked functionals must share the parameter dimension"));
    }
    let name = parts.iter().map(|f| f.metadata().name.clone()).collect::<Vec<_>>().join("+");
    let meta = Metadata {
        name,
        bounded: parts.iter().all(|f| f.metadata().bounded),
        lipschitz_const: None,
        requires: first.metadata().requires,
    };
    Ok(Stacked { parts, meta })
}

impl InferenceFunctional for Stacked {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        self.parts.iter().map(|f| f.output_dim()).sum()
    }

    fn param_dim(&self) -> usize {
        self.parts[0].param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        let pieces = self.parts.iter().map(|f| f.eval(y, theta)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_iterator(self.output_dim(), pieces.iter().flat_map(|v| v.iter().copied())))
    }

    fn d_theta(&self, y: &Observation, theta: &[f64]) -> Result<DMatrix<f64>> {
        let pieces = self.parts.iter().map(|f| f.d_theta(y, theta)).collect::<Result<Vec<_>>>()?;
        Ok(vstack(&pieces, self.param_dim()))
    }

    fn eval_batch(&self, data: &[Observation], theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        let pieces = self.parts.iter().map(|f| f.eval_batch(data, theta)).collect::<Result<Vec<_>>>()?;
        Ok((0..data.len())
            .map(|i| DVector::from_iterator(self.output_dim(), pieces.iter().flat_map(|p| p[i].iter().copied())))
            .collect())
    }

    fn mean_d_theta(&self, data: &[Observation], theta: &[f64]) -> Result<DMatrix<f64>> {
        let pieces = self.parts.iter().map(|f| f.mean_d_theta(data, theta)).collect::<Result<Vec<_>>>()?;
        Ok(vstack(&pieces, self.param_dim()))
    }

    fn trig_form(&self, theta: &[f64]) -> Option<TrigForm> {
        let forms = self.parts.iter().map(|f| f.trig_form(theta)).collect::<Option<Vec<_>>>()?;
        merge_forms(forms)
    }

    fn trig_form_jacobian(&self, theta: &[f64]) -> Option<Vec<TrigForm>> {
        let per_part = self.parts.iter().map(|f| f.trig_form_jacobian(theta)).collect::<Option<Vec<_>>>()?;
        (0..self.param_dim())
            .map(|j| merge_forms(per_part.iter().map(|forms| forms[j].clone()).collect()))
            .collect()
    }
}

fn merge_forms(forms: Vec<TrigForm>) -> Option<TrigForm> {
    let kernel = forms.first()?.kernel;
    let mut components = Vec::new();
    for f in forms {
        let uses_kernel = f.components.iter().flatten().any(|a| a.power > 0);
        if uses_kernel && f.kernel != kernel {
            return None;
        }
        components.extend(f.components);
    }
    Some(TrigForm { kernel, components })
}

fn vstack(pieces: &[DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows: usize = pieces.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for m in pieces {
        out.view_mut((r, 0), (m.nrows(), cols)).copy_from(m);
        r += m.nrows();
    }
    out
}

/// `Ψ(y, θ) − m(θ)` with `m(θ)` the mean of `Ψ(·, θ)` under the pushforward
/// law at `θ`, which makes any functional unbiased for re-weighted data.
pub struct Recentred {
    inner: SharedFunctional,
    model: SharedModel,
    op: crate::observation::ObservationOperator,
    spec: QuadratureSpec,
    shift: ThetaCache<DVector<f64>>,
    meta: Metadata,
}

pub fn recentred(
    inner: SharedFunctional,
    model: SharedModel,
    op: crate::observation::ObservationOperator,
    spec: QuadratureSpec,
) -> Recentred {
    let meta = Metadata { name: format!("{}-recentred", inner.metadata().name), ..inner.metadata().clone() };
    Recentred { inner, model, op, spec, shift: ThetaCache::new(), meta }
}

impl Recentred {
    fn shift(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.shift.get_or_try(theta, || {
            let pop = Population::new(self.model.clone(), theta, self.op.clone(), self.spec)?;
            pop.mean(&*self.inner, theta)
        })
    }
}

impl InferenceFunctional for Recentred {
    fn metadata(&self) -> &Metadata {
        &self.meta
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn eval(&self, y: &Observation, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.inner.eval(y, theta)? - self.shift(theta)?)
    }

    fn eval_batch(&self, data: &[Observation], theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        let m = self.shift(theta)?;
        Ok(self.inner.eval_batch(data, theta)?.into_iter().map(|v| v - &m).collect())
    }

    fn trig_form(&self, theta: &[f64]) -> Option<TrigForm> {
        let m = self.shift(theta).ok()?;
        let neg: Vec<f64> = m.iter().map(|v| -v).collect();
        Some(self.inner.trig_form(theta)?.shifted(&neg))
    }
}

#[cfg(test)]
mod tests;
