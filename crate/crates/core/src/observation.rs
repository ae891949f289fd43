//! Observation operators: what an instrument records of a latent draw, and
//! the pushforward laws they induce.

use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{anchors, weighted_integral, KernelProfile};
use crate::models::ModelFamily;
use crate::specialfn::{integrate_split, Domain, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailPolicy {
    /// The first and last bins extend to `-∞` and `+∞`.
    #[default]
    OpenTails,
    /// Draws outside the window are rejected.
    Truncate,
}

/// `n_bins` consecutive bins of width `bin_width` starting at `left_edge`.
///
/// Bin `k` is `[left_edge + k·w, left_edge + (k+1)·w)`. Under open tails the
/// first bin is widened to `(-∞, left_edge + w)` and the last to
/// `[left_edge + (n-1)·w, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub left_edge: f64,
    pub bin_width: f64,
    pub n_bins: usize,
    #[serde(default)]
    pub tail_policy: TailPolicy,
}

impl BinGrid {
    pub fn new(left_edge: f64, bin_width: f64, n_bins: usize, tail_policy: TailPolicy) -> Result<Self> {
        let grid = Self { left_edge, bin_width, n_bins, tail_policy };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid of width `w` covering `[center - half_span, center + half_span]`.
    pub fn covering(center: f64, half_span: f64, bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !(half_span > 0.0) {
            return Err(domain("bin width and span must be positive"));
        }
        let n_bins = ((2.0 * half_span / bin_width).ceil() as usize).max(2);
        let left_edge = center - 0.5 * n_bins as f64 * bin_width;
        Self::new(left_edge, bin_width, n_bins, TailPolicy::OpenTails)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() || !self.left_edge.is_finite() {
            return Err(domain(format!("invalid bin grid geometry {self:?}")));
        }
        if self.n_bins < 2 {
            return Err(domain(format!("a bin grid needs at least 2 bins, got {}", self.n_bins)));
        }
        Ok(())
    }

    pub fn right_edge(&self) -> f64 {
        self.left_edge + self.n_bins as f64 * self.bin_width
    }

    /// Interval `[lo, hi)` of bin `k` (with infinite ends under open tails).
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let mut lo = self.left_edge + k as f64 * self.bin_width;
        let mut hi = self.left_edge + (k + 1) as f64 * self.bin_width;
        if self.tail_policy == TailPolicy::OpenTails {
            if k == 0 {
                lo = f64::NEG_INFINITY;
            }
            if k + 1 == self.n_bins {
                hi = f64::INFINITY;
            }
        }
        (lo, hi)
    }

    pub fn bin_of(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(domain(format!("cannot bin a non-finite value {x}")));
        }
        let k = ((x - self.left_edge) / self.bin_width).floor();
        match self.tail_policy {
            TailPolicy::OpenTails => Ok(k.clamp(0.0, (self.n_bins - 1) as f64) as usize),
            TailPolicy::Truncate if k >= 0.0 && k < self.n_bins as f64 => Ok(k as usize),
            TailPolicy::Truncate => Err(domain(format!("{x} lies outside the truncated window"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Point,
    KernelWeighted,
    Interval,
    Transform,
    Convolutional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum ObservationOperator {
    Point,
    KernelWeighted { kernel: KernelProfile },
    Interval { grid: BinGrid },
    Transform { frequencies: Vec<f64>, kernel: KernelProfile },
    Convolutional { kernel: KernelProfile, grid: Vec<f64> },
}

impl ObservationOperator {
    pub fn kind(&self) -> OperatorKind {
        match self {
            Self::Point => OperatorKind::Point,
            Self::KernelWeighted { .. } => OperatorKind::KernelWeighted,
            Self::Interval { .. } => OperatorKind::Interval,
            Self::Transform { .. } => OperatorKind::Transform,
            Self::Convolutional { .. } => OperatorKind::Convolutional,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Point => "point".into(),
            Self::KernelWeighted { kernel } => format!("kernel:{}", kernel.label()),
            Self::Interval { grid } => format!("interval:w={}", grid.bin_width),
            Self::Transform { frequencies, .. } => format!("transform:{}", frequencies.len()),
            Self::Convolutional { kernel, .. } => format!("convolution:{}", kernel.label()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Point => Ok(()),
            Self::KernelWeighted { kernel } => kernel.validate(),
            Self::Interval { grid } => grid.validate(),
            Self::Transform { frequencies, kernel } => {
                kernel.validate()?;
                if frequencies.is_empty() {
                    return Err(domain("transform operator needs at least one frequency"));
                }
                let mut sorted = frequencies.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.iter().any(|u| !u.is_finite()) {
                    return Err(domain("transform frequencies must be finite and distinct"));
                }
                Ok(())
            }
            Self::Convolutional { kernel, grid } => {
                kernel.validate()?;
                if kernel.is_classical() {
                    return Err(domain("convolution needs a gaussian kernel"));
                }
                if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) {
                    return Err(domain("convolution grid must be finite and non-empty"));
                }
                Ok(())
            }
        }
    }

    /// Kernel defining the pushforward law, if the operator re-weights.
    pub fn measure_kernel(&self) -> KernelProfile {
        match self {
            Self::KernelWeighted { kernel } => *kernel,
            _ => KernelProfile::classical(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Point(f64),
    /// A pushforward draw carrying its kernel weight `φ(x)`.
    Weighted { value: f64, weight: f64 },
    Bin(usize),
    Transform(Vec<Complex64>),
    Curve(Vec<f64>),
    /// A draw from a multivariate model.
    Vector(Vec<f64>),
}

impl Observation {
    /// Real-line payload of point and kernel-weighted observations.
    pub fn value(&self) -> Result<f64> {
        match self {
            Observation::Point(x) | Observation::Weighted { value: x, .. } => Ok(*x),
            other => Err(Error::VariantMismatch(format!("expected a real-valued observation, got {other:?}"))),
        }
    }

    pub fn vector(&self) -> Result<&[f64]> {
        match self {
            Observation::Vector(v) => Ok(v),
            other => Err(Error::VariantMismatch(format!("expected a vector observation, got {other:?}"))),
        }
    }

    pub fn bin(&self) -> Result<usize> {
        match self {
            Observation::Bin(b) => Ok(*b),
            other => Err(Error::VariantMismatch(format!("expected a bin index, got {other:?}"))),
        }
    }
}

pub fn observe(op: &ObservationOperator, x: f64) -> Result<Observation> {
    if !x.is_finite() {
        return Err(domain(format!("latent draw must be finite, got {x}")));
    }
    match op {
        ObservationOperator::Point => Ok(Observation::Point(x)),
        ObservationOperator::KernelWeighted { kernel } => Ok(Observation::Weighted { value: x, weight: kernel.eval(x) }),
        ObservationOperator::Interval { grid } => Ok(Observation::Bin(grid.bin_of(x)?)),
        ObservationOperator::Transform { frequencies, kernel } => {
            let w = kernel.eval(x);
            Ok(Observation::Transform(frequencies.iter().map(|&u| Complex64::from_polar(w, u * x)).collect()))
        }
        ObservationOperator::Convolutional { .. } => Err(Error::VariantMismatch(
            "convolutional observations act on densities; use convolve_density".into(),
        )),
    }
}

/// `f_θ φ / c(θ)` with `c(θ) = ∫ f_θ φ`.
#[derive(Debug, Clone)]
pub struct PushforwardDensity<'a> {
    model: &'a dyn ModelFamily,
    theta: Vec<f64>,
    kernel: KernelProfile,
    pub c_theta: f64,
}

impl PushforwardDensity<'_> {
    pub fn eval(&self, x: f64) -> f64 {
        self.model.density(x, &self.theta).unwrap_or(0.0) * self.kernel.eval(x) / self.c_theta
    }

    pub fn kernel(&self) -> &KernelProfile {
        &self.kernel
    }
}

fn weighting_kernel(op: &ObservationOperator) -> Result<KernelProfile> {
    match op {
        ObservationOperator::KernelWeighted { kernel } => Ok(*kernel),
        ObservationOperator::Point => Ok(KernelProfile::classical()),
        other => Err(Error::VariantMismatch(format!("expected a kernel-weighted operator, got {}", other.label()))),
    }
}

/// `c(θ) = ∫ f_θ φ`.
pub fn normalising_constant(model: &dyn ModelFamily, theta: &[f64], kernel: &KernelProfile, spec: &QuadratureSpec) -> Result<f64> {
    if kernel.is_classical() {
        return Ok(1.0);
    }
    weighted_integral(model, theta, &|_| 1.0, kernel, spec)
}

pub fn pushforward_density<'a>(
    op: &ObservationOperator,
    model: &'a dyn ModelFamily,
    theta: &[f64],
    spec: &QuadratureSpec,
) -> Result<PushforwardDensity<'a>> {
    let kernel = weighting_kernel(op)?;
    model.check_theta(theta)?;
    let c_theta = normalising_constant(model, theta, &kernel, spec)?;
    if !(c_theta > 0.0) {
        return Err(Error::DegenerateProbability(c_theta));
    }
    Ok(PushforwardDensity { model, theta: theta.to_vec(), kernel, c_theta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardSample {
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
    /// Set when fewer than 1% of proposals were accepted.
    pub low_efficiency: bool,
}

const MIN_ACCEPTANCE: f64 = 0.01;

/// `n` draws from `f_θφ/c(θ)` by rejection from `f_θ` with acceptance `φ(x)`.
pub fn sample_pushforward(
    op: &ObservationOperator,
    model: &dyn ModelFamily,
    theta: &[f64],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<PushforwardSample> {
    let kernel = weighting_kernel(op)?;
    model.check_theta(theta)?;
    if kernel.is_classical() {
        let draws = (0..n).map(|_| model.sample(theta, rng)).collect();
        return Ok(PushforwardSample { draws, acceptance_rate: 1.0, low_efficiency: false });
    }
    let max_proposals = n.saturating_mul(100_000).max(1_000_000);
    let mut draws = Vec::with_capacity(n);
    let mut proposals = 0usize;
    while draws.len() < n {
        if proposals >= max_proposals {
            return Err(Error::DegenerateProbability(draws.len() as f64 / proposals as f64));
        }
        proposals += 1;
        let x = model.sample(theta, rng);
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u < kernel.eval(x) {
            draws.push(x);
        }
    }
    let acceptance_rate = if n == 0 { 1.0 } else { n as f64 / proposals as f64 };
    Ok(PushforwardSample { draws, acceptance_rate, low_efficiency: acceptance_rate < MIN_ACCEPTANCE })
}

/// `n` observations of `model` at `theta` through `op`.
pub fn sample_observations(
    op: &ObservationOperator,
    model: &dyn ModelFamily,
    theta: &[f64],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Observation>> {
    match op {
        ObservationOperator::KernelWeighted { .. } => sample_pushforward(op, model, theta, n, rng)?
            .draws
            .into_iter()
            .map(|x| observe(op, x))
            .collect(),
        _ => (0..n).map(|_| observe(op, model.sample(theta, rng))).collect(),
    }
}

/// `p_θ(I) = ∫_I f_θ`.
pub fn interval_probability(model: &dyn ModelFamily, theta: &[f64], bin: (f64, f64), spec: &QuadratureSpec) -> Result<f64> {
    let (lo, hi) = bin;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(domain(format!("invalid interval [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if let (Some(a), Some(b)) = (model.cdf(lo, theta), model.cdf(hi, theta)) {
        // Use the upper tail where it is the smaller quantity.
        let p = if a > 0.5 {
            let ua = 1.0 - a;
            let ub = 1.0 - b;
            ua - ub
        } else {
            b - a
        };
        return Ok(p.clamp(0.0, 1.0));
    }
    if !model.has_density() {
        return Err(Error::MissingCapability("density"));
    }
    let f = |x: f64| model.density(x, theta).unwrap_or(0.0);
    let p = match Domain::from_bounds(lo, hi) {
        Domain::Line => integrate_split(&f, &anchors(model, theta, &KernelProfile::classical()), spec)?.value,
        d => crate::specialfn::integrate(&f, d, spec)?.value,
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Bin probabilities over a whole grid.
pub fn bin_probabilities(model: &dyn ModelFamily, theta: &[f64], grid: &BinGrid, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    (0..grid.n_bins).map(|k| interval_probability(model, theta, grid.bounds(k), spec)).collect()
}

/// `(K * f_θ)(g)` at each grid point, with `K` the normalised gaussian kernel.
pub fn convolve_density(
    op: &ObservationOperator,
    model: &dyn ModelFamily,
    theta: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<(f64, f64)>> {
    let ObservationOperator::Convolutional { kernel, grid } = op else {
        return Err(Error::VariantMismatch(format!("expected a convolutional operator, got {}", op.label())));
    };
    op.validate()?;
    model.check_theta(theta)?;
    let sp = kernel.sigma_phi().expect("validated gaussian kernel");
    let norm = 1.0 / (sp * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| {
            let local = KernelProfile::gaussian(sp)?.centered_at(g);
            let v = weighted_integral(model, theta, &|_| norm, &local, spec)?;
            Ok((g, v))
        })
        .collect()
}
