//! Expectations of functionals under the law of the observations at a fixed
//! parameter `θ₀`.

use std::cell::RefCell;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{central_jacobian, InferenceFunctional, TrigAtom, TrigForm};
use crate::error::{Error, Result};
use crate::kernels::{anchors, pairing, KernelProfile, TestFunction};
use crate::models::SharedModel;
use crate::observation::{
    bin_probabilities, normalising_constant, observe, sample_observations, Observation, ObservationOperator,
};
use crate::specialfn::{integrate_split, QuadratureSpec};

/// How an expectation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Closed-form pairings of trigonometric atoms.
    Trig,
    /// Adaptive quadrature against the (weighted) density.
    Quadrature,
    /// Exact sum over bin probabilities.
    BinSum,
    /// Average over a fixed simulated sample.
    MonteCarlo,
}

pub const DEFAULT_MC_DRAWS: usize = 200_000;

/// The law of `Y = O(X)` with `X ~ P_{θ₀}`.
pub struct Population {
    model: SharedModel,
    theta0: Vec<f64>,
    op: ObservationOperator,
    spec: QuadratureSpec,
    measure: KernelProfile,
    c_theta: f64,
    bins: Option<Vec<f64>>,
    mc_draws: usize,
    seed: u64,
    sample: Mutex<Option<Arc<Vec<Observation>>>>,
    pairings: Mutex<Vec<(f64, KernelProfile, Complex64)>>,
}

impl Population {
    pub fn new(model: SharedModel, theta0: &[f64], op: ObservationOperator, spec: QuadratureSpec) -> Result<Self> {
        model.check_theta(theta0)?;
        op.validate()?;
        spec.validate()?;
        let measure = op.measure_kernel();
        let c_theta = match op {
            ObservationOperator::KernelWeighted { .. } => normalising_constant(&*model, theta0, &measure, &spec)?,
            _ => 1.0,
        };
        if !(c_theta > 0.0) {
            return Err(Error::DegenerateProbability(c_theta));
        }
        let bins = match &op {
            ObservationOperator::Interval { grid } => {
                let p = bin_probabilities(&*model, theta0, grid, &spec)?;
                let total: f64 = p.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::DegenerateProbability(total));
                }
                Some(p.into_iter().map(|v| v / total).collect())
            }
            _ => None,
        };
        Ok(Self {
            model,
            theta0: theta0.to_vec(),
            op,
            spec,
            measure,
            c_theta,
            bins,
            mc_draws: DEFAULT_MC_DRAWS,
            seed: 0x5eed,
            sample: Mutex::new(None),
            pairings: Mutex::new(Vec::new()),
        })
    }

    /// Size and seed of the simulated sample used by the Monte Carlo route.
    pub fn with_monte_carlo(mut self, draws: usize, seed: u64) -> Self {
        self.mc_draws = draws.max(1);
        self.seed = seed;
        *self.sample.get_mut().expect("sample lock") = None;
        self
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn model(&self) -> &SharedModel {
        &self.model
    }

    pub fn operator(&self) -> &ObservationOperator {
        &self.op
    }

    /// Normalising constant of the pushforward law (1 without re-weighting).
    pub fn c_theta(&self) -> f64 {
        self.c_theta
    }

    /// Bin probabilities at `θ₀` for interval operators.
    pub fn bin_probabilities(&self) -> Option<&[f64]> {
        self.bins.as_deref()
    }

    fn has_density(&self) -> bool {
        self.model.has_density() && self.model.density(self.model.center(&self.theta0), &self.theta0).is_some()
    }

    pub fn route(&self, psi: &dyn InferenceFunctional, theta: &[f64]) -> Route {
        match self.op {
            ObservationOperator::Interval { .. } => Route::BinSum,
            ObservationOperator::Point | ObservationOperator::KernelWeighted { .. } => {
                let trig_ok = self.has_density() || self.measure.is_classical();
                if trig_ok && psi.trig_form(theta).is_some() {
                    Route::Trig
                } else if self.has_density() {
                    Route::Quadrature
                } else {
                    Route::MonteCarlo
                }
            }
            _ => Route::MonteCarlo,
        }
    }

    /// `E_{θ₀}[Ψ(Y, θ)]`.
    pub fn mean(&self, psi: &dyn InferenceFunctional, theta: &[f64]) -> Result<DVector<f64>> {
        let q = psi.output_dim();
        match self.route(psi, theta) {
            Route::Trig => {
                let form = psi.trig_form(theta).ok_or(Error::MissingCapability("trigonometric form"))?;
                let vals = form
                    .components
                    .iter()
                    .map(|atoms| self.atoms_expectation(atoms.iter().map(|a| (*a, [(form.kernel, a.power)]))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DVector::from_vec(vals))
            }
            Route::Quadrature => Ok(DVector::from_vec(self.integrate_vec(q, &|y| Ok(psi.eval(y, theta)?.as_slice().to_vec()))?)),
            Route::BinSum => {
                let p = self.bins.as_ref().expect("interval operator");
                let mut acc = DVector::zeros(q);
                for (b, &pb) in p.iter().enumerate() {
                    if pb > 0.0 {
                        acc += psi.eval(&Observation::Bin(b), theta)? * pb;
                    }
                }
                Ok(acc)
            }
            Route::MonteCarlo => psi.mean(&self.sample()?, theta),
        }
    }

    /// `E_{θ₀}[∂_θΨ(Y, θ)]`.
    pub fn jacobian(&self, psi: &dyn InferenceFunctional, theta: &[f64]) -> Result<DMatrix<f64>> {
        let (q, p) = (psi.output_dim(), psi.param_dim());
        match self.route(psi, theta) {
            Route::Trig => {
                let Some(forms) = psi.trig_form_jacobian(theta) else {
                    return central_jacobian(|t| self.mean(psi, t), theta, q);
                };
                let mut out = DMatrix::zeros(q, p);
                for (j, form) in forms.iter().enumerate() {
                    for (i, atoms) in form.components.iter().enumerate() {
                        out[(i, j)] = self.atoms_expectation(atoms.iter().map(|a| (*a, [(form.kernel, a.power)])))?;
                    }
                }
                Ok(out)
            }
            Route::Quadrature => {
                let flat = self.integrate_vec(q * p, &|y| Ok(psi.d_theta(y, theta)?.as_slice().to_vec()))?;
                Ok(DMatrix::from_vec(q, p, flat))
            }
            Route::BinSum => central_jacobian(|t| self.mean(psi, t), theta, q),
            Route::MonteCarlo => psi.mean_d_theta(&self.sample()?, theta),
        }
    }

    /// `E_{θ₀}[Ψ_a(Y, θ) Ψ_b(Y, θ)ᵀ]`.
    pub fn cross(&self, a: &dyn InferenceFunctional, b: &dyn InferenceFunctional, theta: &[f64]) -> Result<DMatrix<f64>> {
        let (qa, qb) = (a.output_dim(), b.output_dim());
        let (ra, rb) = (self.route(a, theta), self.route(b, theta));
        match (ra, rb) {
            (Route::Trig, Route::Trig) => {
                let fa = a.trig_form(theta).ok_or(Error::MissingCapability("trigonometric form"))?;
                let fb = b.trig_form(theta).ok_or(Error::MissingCapability("trigonometric form"))?;
                let mut out = DMatrix::zeros(qa, qb);
                for i in 0..qa {
                    for j in 0..qb {
                        out[(i, j)] = self.form_product_expectation(&fa, i, &fb, j)?;
                    }
                }
                Ok(out)
            }
            (Route::BinSum, _) | (_, Route::BinSum) => {
                let p = self.bins.as_ref().expect("interval operator");
                let mut acc = DMatrix::zeros(qa, qb);
                for (k, &pk) in p.iter().enumerate() {
                    if pk > 0.0 {
                        let y = Observation::Bin(k);
                        acc += a.eval(&y, theta)? * b.eval(&y, theta)?.transpose() * pk;
                    }
                }
                Ok(acc)
            }
            (Route::MonteCarlo, _) | (_, Route::MonteCarlo) => {
                let data = self.sample()?;
                let va = a.eval_batch(&data, theta)?;
                let vb = b.eval_batch(&data, theta)?;
                let acc = va.iter().zip(&vb).fold(DMatrix::zeros(qa, qb), |acc, (x, y)| acc + x * y.transpose());
                Ok(acc / data.len() as f64)
            }
            _ => {
                let flat = self.integrate_vec(qa * qb, &|y| {
                    let (x, z) = (a.eval(y, theta)?, b.eval(y, theta)?);
                    Ok((x * z.transpose()).as_slice().to_vec())
                })?;
                Ok(DMatrix::from_vec(qa, qb, flat))
            }
        }
    }

    /// `E_{θ₀}[ΨΨᵀ]`.
    pub fn second_moment(&self, psi: &dyn InferenceFunctional, theta: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.cross(psi, psi, theta)?;
        Ok((&m + m.transpose()) * 0.5)
    }

    /// `S = −E_{θ₀}[∂_θΨ(Y, θ₀)]`.
    pub fn sensitivity(&self, psi: &dyn InferenceFunctional) -> Result<DMatrix<f64>> {
        Ok(-self.jacobian(psi, &self.theta0)?)
    }

    /// `V = E_{θ₀}[Ψ(Y, θ₀)Ψ(Y, θ₀)ᵀ]`.
    pub fn variability(&self, psi: &dyn InferenceFunctional) -> Result<DMatrix<f64>> {
        self.second_moment(psi, &self.theta0)
    }

    /// Simulated observations used by the Monte Carlo route.
    pub fn sample(&self) -> Result<Arc<Vec<Observation>>> {
        let mut slot = self.sample.lock().expect("sample lock");
        if let Some(s) = slot.as_ref() {
            return Ok(s.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let data = match &self.op {
            ObservationOperator::Convolutional { .. } => {
                return Err(Error::VariantMismatch("convolutional observations have no per-draw representation".into()))
            }
            op => sample_observations(op, &*self.model, &self.theta0, self.mc_draws, &mut rng)?,
        };
        let data = Arc::new(data);
        *slot = Some(data.clone());
        Ok(data)
    }

    /// `∫ e^{iωx} K(x) f_{θ₀}(x) dx`, memoised.
    fn pairing(&self, omega: f64, kernel: KernelProfile) -> Result<Complex64> {
        if let Some(z) = self
            .pairings
            .lock()
            .expect("pairing lock")
            .iter()
            .find(|(w, k, _)| *w == omega && *k == kernel)
            .map(|e| e.2)
        {
            return Ok(z);
        }
        let z = pairing(&*self.model, &self.theta0, TestFunction::Exponential(omega), &kernel, &self.spec)?;
        self.pairings.lock().expect("pairing lock").push((omega, kernel, z));
        Ok(z)
    }

    /// Expectation of `Σ w(x)(a cos ωx + b sin ωx)` where each weight is a
    /// product of kernel powers.
    fn atoms_expectation<const N: usize, I>(&self, atoms: I) -> Result<f64>
    where
        I: Iterator<Item = (TrigAtom, [(KernelProfile, u32); N])>,
    {
        let mut total = 0.0;
        for (atom, factors) in atoms {
            if atom.cos == 0.0 && atom.sin == 0.0 {
                continue;
            }
            let mut kernel = self.measure;
            let mut amp = 1.0;
            for (k, p) in factors {
                if p > 0 && k.is_schwartz() {
                    let (next, a) = k.power(p).product(&kernel);
                    kernel = next;
                    amp *= a;
                }
            }
            let z = self.pairing(atom.omega, kernel)?;
            total += amp * (atom.cos * z.re + atom.sin * z.im);
        }
        Ok(total / self.c_theta)
    }

    fn form_product_expectation(&self, fa: &TrigForm, i: usize, fb: &TrigForm, j: usize) -> Result<f64> {
        let mut total = 0.0;
        for a in &fa.components[i] {
            for b in &fb.components[j] {
                let pair = a.product(b);
                let factors = [(fa.kernel, a.power), (fb.kernel, b.power)];
                total += self.atoms_expectation(pair.into_iter().map(|t| (t, factors)))?;
            }
        }
        Ok(total)
    }

    fn observation_at(&self, x: f64) -> Result<Observation> {
        match self.op {
            ObservationOperator::Point => Ok(Observation::Point(x)),
            _ => observe(&self.op, x),
        }
    }

    /// `n` scalar integrals `∫ h(y)_k dP_{θ₀}`, one per output coordinate.
    fn integrate_vec(&self, n: usize, h: &dyn Fn(&Observation) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let pts = anchors(&*self.model, &self.theta0, &self.measure);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let g = |x: f64| {
                if failure.borrow().is_some() {
                    return 0.0;
                }
                let w = self.measure.eval(x);
                if w == 0.0 {
                    return 0.0;
                }
                let f = self.model.density(x, &self.theta0).unwrap_or(0.0);
                if f == 0.0 {
                    return 0.0;
                }
                match self.observation_at(x).and_then(|y| h(&y)) {
                    Ok(v) => v[k] * w * f,
                    Err(e) => {
                        *failure.borrow_mut() = Some(e);
                        0.0
                    }
                }
            };
            let v = integrate_split(&g, &pts, &self.spec);
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
            out.push(v?.value / self.c_theta);
        }
        Ok(out)
    }
}
