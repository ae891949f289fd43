//! Adaptive quadrature.
//!
//! Finite intervals use a globally adaptive 21-point Gauss–Kronrod rule.
//! Infinite ranges are mapped onto finite ones, and integrands of the form
//! `g(y) cos(ωy)` / `g(y) sin(ωy)` on a half-line are summed cycle by cycle
//! with Wynn's epsilon acceleration, which is what makes heavy-tailed
//! densities times bounded oscillatory factors tractable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Gauss–Kronrod on finite ranges; infinite ranges via `x = t / (1 - t²)`.
    #[default]
    AdaptiveInterval,
    /// Each half-line mapped through `x = a ± (1 - t) / t`.
    HalfLineTransformed,
    /// Gauss–Hermite for integrands with Gaussian decay (full line only).
    HermiteWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub scheme: Scheme,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 4000,
            scheme: Scheme::AdaptiveInterval,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize, scheme: Scheme) -> Result<Self> {
        let spec = Self { abs_tol, rel_tol, max_subdivisions, scheme };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) || self.max_subdivisions < 1 {
            return Err(Error::Domain(format!("invalid quadrature spec {self:?}")));
        }
        Ok(())
    }

    /// Same spec with both tolerances scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }

    /// Tighter spec used where finite differences of quadratures are taken.
    pub fn tight() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_subdivisions: 8000,
            scheme: Scheme::AdaptiveInterval,
        }
    }

    /// Componentwise tighter of two specs.
    pub fn min_with(&self, other: &QuadratureSpec) -> QuadratureSpec {
        QuadratureSpec {
            abs_tol: self.abs_tol.min(other.abs_tol),
            rel_tol: self.rel_tol.min(other.rel_tol),
            max_subdivisions: self.max_subdivisions.max(other.max_subdivisions),
            scheme: other.scheme,
        }
    }

    fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval(f64, f64),
    /// `[a, ∞)`
    Upper(f64),
    /// `(-∞, b]`
    Lower(f64),
    Line,
}

impl Domain {
    /// Domain for `[lo, hi]` where either end may be infinite.
    pub fn from_bounds(lo: f64, hi: f64) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Domain::Interval(lo, hi),
            (true, false) => Domain::Upper(lo),
            (false, true) => Domain::Lower(hi),
            (false, false) => Domain::Line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

// Kronrod abscissae (descending) and weights; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_478_806,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut resabs = kronrod.abs();
    let mut gauss = 0.0;
    let mut fv = [(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv[j].0 - mean).abs() + (fv[j].1 - mean).abs());
    }
    let value = kronrod * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (1.0f64).min((200.0 * error / resasc).powf(1.5));
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Segment { a, b, value, error }
}

/// Globally adaptive Gauss–Kronrod on a finite interval.
fn adaptive<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    adaptive_guarded(f, a, b, spec, (false, false))
}

/// Adaptive integration where `guard` marks endpoints that are images of an
/// infinite limit. Mass piling up within roundoff reach of such an endpoint
/// signals a divergent integral.
fn adaptive_guarded<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
    guard: (bool, bool),
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let first = gk21(f, lo, hi);
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(first);
    let mut subdivisions = 1;
    while total_err > spec.tolerance(total) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                estimate: sign * total,
                error: total_err,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Segment cannot be split further at this precision.
            return Err(Error::NonConvergence {
                estimate: sign * total,
                error: total_err,
                subdivisions,
            });
        }
        let left = gk21(f, worst.a, mid);
        let right = gk21(f, mid, worst.b);
        evaluations += 42;
        subdivisions += 1;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if subdivisions % 64 == 0 {
            // Refresh the running sums to avoid drift from repeated updates.
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    if guard.0 || guard.1 {
        let mass: f64 = heap.iter().map(|s| s.value.abs()).sum();
        let reach = 1e-6 * (hi - lo);
        let outer: f64 = heap
            .iter()
            .filter(|s| (guard.0 && s.b <= lo + reach) || (guard.1 && s.a >= hi - reach))
            .map(|s| s.value.abs())
            .sum();
        let dominant = outer > 0.5 * mass + spec.abs_tol;
        if dominant {
            return Err(Error::NonConvergence { estimate: sign * value, error: f64::INFINITY, subdivisions: heap.len() });
        }
    }
    Ok(Estimate { value: sign * value, error, evaluations })
}

/// Integrate `f` over `domain`.
///
/// On non-convergence the error carries the best estimate and its error bound.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, domain: Domain, spec: &QuadratureSpec) -> Result<Estimate> {
    spec.validate()?;
    match (domain, spec.scheme) {
        (Domain::Interval(a, b), _) => adaptive(f, a, b, spec),
        (Domain::Line, Scheme::HermiteWeighted) => hermite(f, spec),
        (Domain::Line, Scheme::AdaptiveInterval) => {
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let x = t / d;
                let v = f(x) * (1.0 + t * t) / (d * d);
                if v.is_finite() { v } else { 0.0 }
            };
            adaptive_guarded(&g, -1.0, 1.0, spec, (true, true))
        }
        (Domain::Line, _) => {
            let half = spec.scaled(0.5);
            let lower = half_line(f, 0.0, -1.0, &half)?;
            let upper = half_line(f, 0.0, 1.0, &half)?;
            Ok(Estimate {
                value: lower.value + upper.value,
                error: lower.error + upper.error,
                evaluations: lower.evaluations + upper.evaluations,
            })
        }
        (Domain::Upper(a), _) => half_line(f, a, 1.0, spec),
        (Domain::Lower(b), _) => half_line(f, b, -1.0, spec),
    }
}

/// `∫` over `[a, ∞)` (direction +1) or `(-∞, a]` (direction -1).
fn half_line<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, direction: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    let g = |t: f64| {
        let x = a + direction * (1.0 - t) / t;
        let v = f(x) / (t * t);
        if v.is_finite() { v } else { 0.0 }
    };
    adaptive_guarded(&g, 0.0, 1.0, spec, (true, false))
}

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} g(x) dx` (Golub–Welsch free
/// Newton iteration on the orthonormal recurrence).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

fn hermite<F: Fn(f64) -> f64 + ?Sized>(f: &F, spec: &QuadratureSpec) -> Result<Estimate> {
    let rule = |n: usize| {
        let (x, w) = gauss_hermite(n);
        x.iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * (xi * xi).exp() * f(xi))
            .sum::<f64>()
    };
    let coarse = rule(48);
    let fine = rule(96);
    let error = (fine - coarse).abs();
    if error > spec.tolerance(fine) {
        return Err(Error::NonConvergence { estimate: fine, error, subdivisions: 1 });
    }
    Ok(Estimate { value: fine, error, evaluations: 144 })
}

/// Expectation `∫ g(x) N(x; mean, sd²) dx` by a fixed Gauss–Hermite rule.
pub fn gaussian_expectation<F: Fn(f64) -> f64 + ?Sized>(g: &F, mean: f64, sd: f64, order: usize) -> f64 {
    let (x, w) = gauss_hermite(order);
    let s2 = std::f64::consts::SQRT_2 * sd;
    x.iter().zip(&w).map(|(&xi, &wi)| wi * g(mean + s2 * xi)).sum::<f64>() / PI.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

/// `∫_0^∞ g(y) cos(ωy) dy` or the sine analogue, for `g` eventually monotone
/// and decaying. Half-period cycles are integrated separately and their
/// partial sums accelerated with the epsilon algorithm.
pub fn integrate_fourier<F: Fn(f64) -> f64 + ?Sized>(
    g: &F,
    omega: f64,
    kind: Trig,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    spec.validate()?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("oscillation frequency must be positive, got {omega}")));
    }
    let period = PI / omega;
    let h = |y: f64| {
        let t = match kind {
            Trig::Cos => (omega * y).cos(),
            Trig::Sin => (omega * y).sin(),
        };
        g(y) * t
    };
    let cycle_spec = spec.scaled(0.05);
    const MAX_CYCLES: usize = 600;
    let mut partial = 0.0;
    let mut sums: Vec<f64> = Vec::with_capacity(64);
    let mut evaluations = 0;
    let mut quad_err = 0.0;
    let mut last = f64::NAN;
    let mut stable = 0;
    let mut quiet = 0;
    for k in 0..MAX_CYCLES {
        let a = k as f64 * period;
        let term = adaptive(&h, a, a + period, &cycle_spec)?;
        evaluations += term.evaluations;
        quad_err += term.error;
        partial += term.value;
        sums.push(partial);

        if term.value.abs() <= 1e-3 * spec.abs_tol {
            quiet += 1;
            if quiet >= 3 {
                return Ok(Estimate { value: partial, error: quad_err, evaluations });
            }
        } else {
            quiet = 0;
        }
        if sums.len() >= 5 {
            let est = wynn_epsilon(&sums);
            let diff = (est - last).abs();
            if diff <= 0.1 * spec.tolerance(est) {
                stable += 1;
                if stable >= 2 {
                    return Ok(Estimate { value: est, error: diff + quad_err, evaluations });
                }
            } else {
                stable = 0;
            }
            last = est;
        }
    }
    Err(Error::NonConvergence {
        estimate: if last.is_finite() { last } else { partial },
        error: f64::INFINITY,
        subdivisions: MAX_CYCLES,
    })
}

/// Highest-order even-column entry of the epsilon table built from `sums`.
fn wynn_epsilon(sums: &[f64]) -> f64 {
    let n = sums.len();
    // prev = column k-1, cur = column k
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = sums.to_vec();
    let mut best = *sums.last().unwrap();
    let mut k = 0;
    while cur.len() >= 2 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            if d == 0.0 || !d.is_finite() {
                return best;
            }
            next.push(prev[i + 1] + 1.0 / d);
        }
        prev = cur;
        cur = next;
        k += 1;
        if k % 2 == 0 {
            let v = *cur.last().unwrap();
            if v.is_finite() {
                best = v;
            } else {
                return best;
            }
        }
    }
    best
}
