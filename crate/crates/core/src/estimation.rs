//! Estimators: roots of empirical estimating equations, the ECF phase
//! estimator, GMM and the interval-censored likelihood benchmark.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::inference::{sinusoidal, InferenceFunctional};
use crate::models::SharedModel;
use crate::observation::{interval_probability, BinGrid, Observation};
use crate::specialfn::QuadratureSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub method: String,
    pub iterations: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub theta_hat: Vec<f64>,
    pub s_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    /// Estimated covariance of `θ̂`.
    pub sandwich: DMatrix<f64>,
    /// `SᵀV⁻¹S`; `None` when `V̂` is singular.
    pub g_hat: Option<DMatrix<f64>>,
    pub n: usize,
    pub trace: SolverTrace,
}

impl EstimationResult {
    pub fn std_errors(&self) -> Vec<f64> {
        self.sandwich.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Damped Newton steps are halved at most this many times.
pub const MAX_HALVINGS: usize = 20;
/// Condition number above which a GMM weight is rejected.
pub const MAX_WEIGHT_CONDITION: f64 = 1e12;

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation from the median (unscaled).
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// Median of the real-valued payloads.
pub fn median_pilot(data: &[Observation]) -> Result<f64> {
    let xs = data.iter().map(Observation::value).collect::<Result<Vec<_>>>()?;
    if xs.is_empty() {
        return Err(Error::DegenerateData("empty sample".into()));
    }
    Ok(median(&xs))
}

fn norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

fn check_sensitivity(s: &DMatrix<f64>) -> Result<()> {
    let p = s.ncols();
    let scale = s.amax().max(1.0).powi(p as i32);
    let det = if s.is_square() { s.determinant() } else { (s.transpose() * s).determinant().sqrt() };
    if !det.is_finite() || det.abs() < 1e-12 * scale {
        return Err(Error::SingularSensitivity(det.abs()));
    }
    Ok(())
}

fn symmetrise(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `(SᵀWS)⁻¹ SᵀWVWS (SᵀWS)⁻¹ / n`.
fn sandwich(s: &DMatrix<f64>, v: &DMatrix<f64>, w: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let bread = (s.transpose() * w * s).try_inverse().ok_or(Error::SingularSensitivity(0.0))?;
    let meat = s.transpose() * w * v * w * s;
    Ok(symmetrise(&bread * meat * &bread / n as f64))
}

fn godambe(s: &DMatrix<f64>, v: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let vinv = v.clone().try_inverse()?;
    let g = s.transpose() * vinv * s;
    g.iter().all(|x| x.is_finite()).then(|| symmetrise(g))
}

/// `Ŝ`, `V̂` (divisor `n`) and the derived covariance at `theta`.
fn assemble(
    psi: &dyn InferenceFunctional,
    data: &[Observation],
    theta: Vec<f64>,
    weight: Option<&DMatrix<f64>>,
    trace: SolverTrace,
) -> Result<EstimationResult> {
    let n = data.len();
    let s_hat = -psi.mean_d_theta(data, &theta)?;
    check_sensitivity(&s_hat)?;
    let values = psi.eval_batch(data, &theta)?;
    let q = psi.output_dim();
    let v_hat = symmetrise(values.iter().fold(DMatrix::zeros(q, q), |acc, v| acc + v * v.transpose()) / n as f64);
    let identity = DMatrix::identity(q, q);
    let w = weight.unwrap_or(&identity);
    let sandwich = sandwich(&s_hat, &v_hat, w, n)?;
    let g_hat = godambe(&s_hat, &v_hat);
    Ok(EstimationResult { theta_hat: theta, s_hat, v_hat, sandwich, g_hat, n, trace })
}

/// Solves `Ψ̄_n(θ) = 0` starting from `pilot`.
///
/// Damped Newton with the empirical Jacobian; for scalar parameters a
/// bracketing scan outward from the pilot followed by bisection is used when
/// Newton stalls.
pub fn solve_z(
    psi: &dyn InferenceFunctional,
    data: &[Observation],
    pilot: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EstimationResult> {
    if data.is_empty() {
        return Err(Error::DegenerateData("empty sample".into()));
    }
    if pilot.len() != psi.param_dim() || pilot.iter().any(|v| !v.is_finite()) {
        return Err(domain(format!("pilot must be a finite vector of length {}", psi.param_dim())));
    }
    if psi.output_dim() != psi.param_dim() {
        return Err(domain("solve_z needs an exactly identified system; use gmm"));
    }
    if !(tol > 0.0) {
        return Err(domain("tolerance must be positive"));
    }
    let mut theta = pilot.to_vec();
    let mut r = psi.mean(data, &theta)?;
    let mut iterations = 0;
    while norm(&r) > tol && iterations < max_iter {
        iterations += 1;
        let Some(step) = psi.mean_d_theta(data, &theta).ok().and_then(|j| j.lu().solve(&(-&r))) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + lambda * d).collect();
            if let Ok(rc) = psi.mean(data, &cand) {
                if norm(&rc) < norm(&r) {
                    improved = Some((cand, rc));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match improved {
            Some((t, rc)) => {
                theta = t;
                r = rc;
            }
            None => break,
        }
    }
    let mut method = "newton".to_string();
    if norm(&r) > tol {
        if pilot.len() != 1 {
            return Err(Error::NoRoot(format!("residual {:e} after {iterations} Newton iterations", norm(&r))));
        }
        theta = vec![bracket_and_bisect(psi, data, pilot[0], tol, max_iter)?];
        r = psi.mean(data, &theta)?;
        method = "bisection".into();
    }
    let trace = SolverTrace { method, iterations, residual_norm: norm(&r) };
    assemble(psi, data, theta, None, trace)
}

/// Scans outward from `pilot` for the nearest sign change, then bisects.
fn bracket_and_bisect(psi: &dyn InferenceFunctional, data: &[Observation], pilot: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let f = |t: f64| psi.mean(data, &[t]).map(|v| v[0]);
    let spread = data
        .iter()
        .map(Observation::value)
        .collect::<Result<Vec<_>>>()
        .map(|xs| mad(&xs))
        .unwrap_or(1.0);
    let window = 20.0 * spread.max(1.0);
    const STEPS: usize = 2000;
    let h = window / STEPS as f64;
    let f0 = f(pilot)?;
    if f0 == 0.0 {
        return Ok(pilot);
    }
    let (mut left, mut right) = ((pilot, f0), (pilot, f0));
    let mut bracket = None;
    for k in 1..=STEPS {
        for side in [1.0, -1.0] {
            let t = pilot + side * k as f64 * h;
            let Ok(v) = f(t) else { continue };
            let prev = if side > 0.0 { right } else { left };
            if v == 0.0 {
                return Ok(t);
            }
            if v.signum() != prev.1.signum() {
                bracket = Some(if side > 0.0 { ((prev.0, prev.1), (t, v)) } else { ((t, v), (prev.0, prev.1)) });
                break;
            }
            if side > 0.0 {
                right = (t, v);
            } else {
                left = (t, v);
            }
        }
        if bracket.is_some() {
            break;
        }
    }
    let Some(((mut a, mut fa), (mut b, _))) = bracket else {
        return Err(Error::NoRoot(format!("no sign change within ±{window} of the pilot")));
    };
    for _ in 0..max_iter.max(200) {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm.abs() <= tol || (b - a) < 1e-15 * (1.0 + m.abs()) {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(Error::NoRoot("bisection did not reach the tolerance".into()))
}

/// Location from the phase of the empirical characteristic function at `u`,
/// resolving the `2π/u` ambiguity toward `pilot` (default: sample median).
pub fn ecf_phase_estimator(data: &[f64], u: f64, pilot: Option<f64>) -> Result<EstimationResult> {
    if data.is_empty() {
        return Err(Error::DegenerateData("empty sample".into()));
    }
    if !(u > 0.0) || !u.is_finite() {
        return Err(domain(format!("frequency must be positive, got {u}")));
    }
    let n = data.len() as f64;
    let z: Complex64 = data.iter().map(|&x| Complex64::from_polar(1.0, u * x)).sum::<Complex64>() / n;
    let threshold = 3.0 / n.sqrt();
    if z.norm() < threshold {
        return Err(Error::DegenerateModulus { modulus: z.norm(), threshold });
    }
    let pilot = pilot.unwrap_or_else(|| median(data));
    let alpha = z.arg();
    let period = 2.0 * std::f64::consts::PI;
    let k0 = ((u * pilot - alpha) / period).floor() as i64;
    let theta = (k0 - 1..=k0 + 2)
        .map(|k| (alpha + k as f64 * period) / u)
        .min_by(|a, b| (a - pilot).abs().total_cmp(&(b - pilot).abs()))
        .expect("candidate range is non-empty");
    let psi = sinusoidal(u)?;
    let obs: Vec<Observation> = data.iter().map(|&x| Observation::Point(x)).collect();
    let r = psi.mean(&obs, &[theta])?;
    let trace = SolverTrace { method: "ecf-phase".into(), iterations: 0, residual_norm: norm(&r) };
    assemble(&psi, &obs, vec![theta], None, trace)
}

/// Minimises `Ψ̄_nᵀ W Ψ̄_n` by damped Gauss–Newton; with `steps = 2` the
/// weight is re-estimated as `V̂⁻¹` at the first-step estimate.
pub fn gmm(psi: &dyn InferenceFunctional, data: &[Observation], pilot: &[f64], steps: usize, tol: f64, max_iter: usize) -> Result<EstimationResult> {
    if data.is_empty() {
        return Err(Error::DegenerateData("empty sample".into()));
    }
    let (q, p) = (psi.output_dim(), psi.param_dim());
    if q < p {
        return Err(domain(format!("GMM needs at least as many equations ({q}) as parameters ({p})")));
    }
    if pilot.len() != p {
        return Err(domain(format!("pilot must have length {p}")));
    }
    if !(1..=2).contains(&steps) {
        return Err(domain("GMM supports one or two steps"));
    }
    let mut w = DMatrix::identity(q, q);
    let (mut theta, mut iterations) = gauss_newton(psi, data, pilot, &w, tol, max_iter)?;
    if steps == 2 {
        let values = psi.eval_batch(data, &theta)?;
        let v = values.iter().fold(DMatrix::zeros(q, q), |acc, x| acc + x * x.transpose()) / data.len() as f64;
        w = weight_from(&symmetrise(v))?;
        let (t2, it2) = gauss_newton(psi, data, &theta, &w, tol, max_iter)?;
        theta = t2;
        iterations += it2;
    }
    let r = psi.mean(data, &theta)?;
    let trace = SolverTrace { method: format!("gmm-{steps}step"), iterations, residual_norm: norm(&r) };
    assemble(psi, data, theta, Some(&w), trace)
}

fn weight_from(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = v.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(e.abs())));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_WEIGHT_CONDITION) {
        return Err(Error::SingularWeight(cond));
    }
    v.clone().try_inverse().map(symmetrise).ok_or(Error::SingularWeight(cond))
}

fn gauss_newton(
    psi: &dyn InferenceFunctional,
    data: &[Observation],
    pilot: &[f64],
    w: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let objective = |r: &DVector<f64>| (r.transpose() * w * r)[(0, 0)];
    let mut theta = pilot.to_vec();
    let mut r = psi.mean(data, &theta)?;
    let mut q = objective(&r);
    for it in 1..=max_iter {
        let j = psi.mean_d_theta(data, &theta)?;
        let grad = j.transpose() * w * &r;
        if grad.norm() <= tol * tol || q <= tol * tol {
            return Ok((theta, it - 1));
        }
        let h = j.transpose() * w * &j;
        let Some(step) = h.lu().solve(&(-&grad)) else {
            return Err(Error::SingularSensitivity(0.0));
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + lambda * d).collect();
            if let Ok(rc) = psi.mean(data, &cand) {
                let qc = objective(&rc);
                if qc < q {
                    let small = (lambda * step.norm()) <= 1e-12 * (1.0 + DVector::from_column_slice(&theta).norm());
                    theta = cand;
                    r = rc;
                    q = qc;
                    accepted = true;
                    if small {
                        return Ok((theta, it));
                    }
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // no descent direction left: stationary within numerical precision
            return Ok((theta, it));
        }
    }
    Ok((theta, max_iter))
}

/// Maximises `Σ_b n_b log p_b(θ)` for binned counts.
pub fn interval_mle_benchmark(model: SharedModel, grid: &BinGrid, counts: &[u64], pilot: &[f64]) -> Result<EstimationResult> {
    grid.validate()?;
    if counts.len() != grid.n_bins {
        return Err(domain(format!("expected {} bin counts, got {}", grid.n_bins, counts.len())));
    }
    model.check_theta(pilot)?;
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::DegenerateData("no observations".into()));
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Boundary("all observations fall in one bin; the likelihood has no interior maximum".into()));
    }
    let spec = QuadratureSpec::tight();
    let probs = |theta: &[f64]| -> Result<Vec<f64>> {
        model.check_theta(theta)?;
        (0..grid.n_bins).map(|k| interval_probability(&*model, theta, grid.bounds(k), &spec)).collect()
    };
    let loglik = |theta: &[f64]| -> Result<f64> {
        let p = probs(theta)?;
        let mut ll = 0.0;
        for (&c, &pb) in counts.iter().zip(&p) {
            if c > 0 {
                if pb <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                ll += c as f64 * pb.ln();
            }
        }
        Ok(ll)
    };
    let d = pilot.len();
    let mut theta = pilot.to_vec();
    let mut ll = loglik(&theta)?;
    let mut iterations = 0;
    let tol = 1e-10;
    let mut grad = DVector::zeros(d);
    for it in 1..=200 {
        iterations = it;
        let (g, hess) = derivatives(&loglik, &theta)?;
        grad = g;
        if grad.norm() / n as f64 <= tol {
            break;
        }
        let neg = -&hess;
        let step = match neg.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone() / (n as f64),
        };
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + lambda * s).collect();
            if let Ok(lc) = loglik(&cand) {
                if lc > ll {
                    theta = cand;
                    ll = lc;
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    for (i, (&t, &(lo, hi))) in theta.iter().zip(model.param_domain().iter()).enumerate() {
        let scale = 1e-6 * (1.0 + t.abs());
        if (t - lo).abs() < scale || (hi - t).abs() < scale {
            return Err(Error::Boundary(format!("parameter {i} at the edge of its domain")));
        }
    }
    // Ŝ from the observed information; V̂ from the per-bin scores.
    let (_, hess) = derivatives(&loglik, &theta)?;
    let s_hat = symmetrise(-hess / n as f64);
    check_sensitivity(&s_hat)?;
    let p0 = probs(&theta)?;
    let mut v_hat = DMatrix::zeros(d, d);
    let mut probe = theta.clone();
    let mut dp = vec![DVector::zeros(d); grid.n_bins];
    for j in 0..d {
        let h = 1e-5 * (1.0 + theta[j].abs());
        probe[j] = theta[j] + h;
        let up = probs(&probe)?;
        probe[j] = theta[j] - h;
        let down = probs(&probe)?;
        probe[j] = theta[j];
        for b in 0..grid.n_bins {
            dp[b][j] = (up[b] - down[b]) / (2.0 * h);
        }
    }
    for b in 0..grid.n_bins {
        if counts[b] > 0 {
            let s = &dp[b] / p0[b];
            v_hat += &s * s.transpose() * (counts[b] as f64 / n as f64);
        }
    }
    let identity = DMatrix::identity(d, d);
    let sandwich = sandwich(&s_hat, &v_hat, &identity, n as usize)?;
    let g_hat = godambe(&s_hat, &v_hat);
    let trace = SolverTrace { method: "interval-mle".into(), iterations, residual_norm: grad.norm() / n as f64 };
    Ok(EstimationResult { theta_hat: theta, s_hat, v_hat, sandwich, g_hat, n: n as usize, trace })
}

/// Gradient and Hessian of `f` by central differences.
fn derivatives(f: &dyn Fn(&[f64]) -> Result<f64>, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = theta.len();
    let f0 = f(theta)?;
    let h: Vec<f64> = theta.iter().map(|t| 1e-4 * (1.0 + t.abs())).collect();
    let mut probe = theta.to_vec();
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        probe[i] = theta[i] + h[i];
        let up = f(&probe)?;
        probe[i] = theta[i] - h[i];
        let down = f(&probe)?;
        probe[i] = theta[i];
        grad[i] = (up - down) / (2.0 * h[i]);
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut at = |si: f64, sj: f64| {
                probe[i] = theta[i] + si * h[i];
                probe[j] = theta[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = theta[i];
                probe[j] = theta[j];
                v
            };
            let v = (at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((grad, hess))
}
