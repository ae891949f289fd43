//! Seeded Monte Carlo studies, information audits and efficiency curves,
//! written out as CSV.

mod config;

pub use config::{EstimatorSpec, ExperimentConfig, ExperimentKind, GridSpec, ModelSpec, OperatorSpec};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{ecf_phase_estimator, interval_mle_benchmark, mad, median, solve_z, EstimationResult};
use crate::inference::{
    interval_score, interval_sinusoidal, recentred, score_if, sinusoidal, IntervalForm, SharedFunctional,
};
use crate::information::{are_curve, fisher_classical, fisher_interval_grid, hierarchy_report, AreCurve, InformationReport};
use crate::models::SharedModel;
use crate::observation::{sample_observations, BinGrid, Observation, ObservationOperator};
use crate::specialfn::QuadratureSpec;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "OBSINFER_WORKERS";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Worker count: explicit flag, then config, then the environment.
pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Option<usize> {
    flag.or(config).or_else(|| std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|w| *w > 0))
}

/// Neumaier-compensated sum.
fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Summary of one estimator over the replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub family: String,
    pub setting: String,
    pub estimator: String,
    pub bias: f64,
    /// Divisor `R − 1`.
    pub variance: f64,
    pub mse: f64,
    /// `median |θ̂ − θ|`.
    pub mad: f64,
    pub mean_sandwich_variance: f64,
    /// Asymptotic variance of an efficient estimator for the observed data.
    pub reference_variance: f64,
    pub replications: usize,
    pub failures: usize,
}

impl SimulationRow {
    fn from_errors(family: String, setting: String, estimator: String, outcomes: &[Result<(f64, Option<f64>)>], truth: f64, reference_variance: f64) -> Self {
        let ok: Vec<(f64, Option<f64>)> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
        let r = ok.len();
        let errors: Vec<f64> = ok.iter().map(|(t, _)| t - truth).collect();
        let bias = if r > 0 { ksum(errors.iter().copied()) / r as f64 } else { f64::NAN };
        let variance = if r > 1 { ksum(errors.iter().map(|e| (e - bias) * (e - bias))) / (r - 1) as f64 } else { f64::NAN };
        let mse = if r > 0 { ksum(errors.iter().map(|e| e * e)) / r as f64 } else { f64::NAN };
        let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        let sandwiches: Vec<f64> = ok.iter().filter_map(|(_, s)| *s).collect();
        let mean_sandwich_variance =
            if sandwiches.is_empty() { f64::NAN } else { ksum(sandwiches.iter().copied()) / sandwiches.len() as f64 };
        Self {
            family,
            setting,
            estimator,
            bias,
            variance,
            mse,
            mad: median(&abs),
            mean_sandwich_variance,
            reference_variance,
            replications: r,
            failures: outcomes.len() - r,
        }
    }
}

/// One estimate with its sandwich standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub estimator: String,
    pub theta_hat: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub method: String,
    pub iterations: usize,
    pub residual_norm: f64,
}

fn bin_grid(op: &ObservationOperator) -> Option<&BinGrid> {
    match op {
        ObservationOperator::Interval { grid } => Some(grid),
        _ => None,
    }
}

/// Finite representative point of bin `k`.
fn bin_midpoint(grid: &BinGrid, k: usize) -> f64 {
    grid.left_edge + (k as f64 + 0.5) * grid.bin_width
}

fn observed_values(data: &[Observation], op: &ObservationOperator) -> Result<Vec<f64>> {
    match bin_grid(op) {
        Some(grid) => data.iter().map(|y| Ok(bin_midpoint(grid, y.bin()?))).collect(),
        None => data.iter().map(Observation::value).collect(),
    }
}

fn pilot(model: &SharedModel, values: &[f64]) -> Vec<f64> {
    let m = median(values);
    if model.param_dim() == 2 {
        vec![m, (1.4826 * mad(values)).max(1e-3)]
    } else {
        vec![m]
    }
}

/// The functional behind a root-type estimator for data produced by `op`.
fn functional(spec: &EstimatorSpec, model: &SharedModel, op: &ObservationOperator) -> Result<SharedFunctional> {
    let quad = QuadratureSpec::default();
    let reweighted = matches!(op, ObservationOperator::KernelWeighted { kernel } if kernel.is_schwartz());
    let base: SharedFunctional = match (spec, bin_grid(op)) {
        (EstimatorSpec::Sinusoidal { c }, Some(grid)) => {
            return Ok(Arc::new(interval_sinusoidal(*c, model.clone(), *grid, IntervalForm::Conditional)?))
        }
        (EstimatorSpec::Score, Some(grid)) => return Ok(Arc::new(interval_score(model.clone(), *grid)?)),
        (EstimatorSpec::Sinusoidal { c }, None) => Arc::new(sinusoidal(*c)?.with_param_dim(model.param_dim())),
        (EstimatorSpec::Score, None) => Arc::new(score_if(model.clone())?),
        (other, _) => return Err(Error::Config(format!("{} is not an inference functional", other.label()))),
    };
    Ok(if reweighted { Arc::new(recentred(base, model.clone(), op.clone(), quad)) } else { base })
}

fn run_estimator(
    spec: &EstimatorSpec,
    model: &SharedModel,
    op: &ObservationOperator,
    data: &[Observation],
    cfg: &ExperimentConfig,
) -> Result<EstimationResult> {
    let values = observed_values(data, op)?;
    let n = data.len();
    if bin_grid(op).is_some() {
        let mut occupied: Vec<usize> = data.iter().map(Observation::bin).collect::<Result<_>>()?;
        occupied.sort_unstable();
        occupied.dedup();
        if occupied.len() < 2 {
            return Err(Error::DegenerateData("binned sample occupies fewer than 2 bins".into()));
        }
    }
    let simple = |theta: f64, var: f64, method: &str| EstimationResult {
        theta_hat: vec![theta],
        s_hat: nalgebra::DMatrix::from_element(1, 1, 1.0),
        v_hat: nalgebra::DMatrix::from_element(1, 1, var),
        sandwich: nalgebra::DMatrix::from_element(1, 1, var / n as f64),
        g_hat: None,
        n,
        trace: crate::estimation::SolverTrace { method: method.into(), iterations: 0, residual_norm: 0.0 },
    };
    match spec {
        EstimatorSpec::Mean | EstimatorSpec::Median | EstimatorSpec::Ecf { .. } if bin_grid(op).is_some() => {
            Err(Error::VariantMismatch(format!("{} needs point observations", spec.label())))
        }
        EstimatorSpec::Mean => {
            let m = ksum(values.iter().copied()) / n as f64;
            let var = ksum(values.iter().map(|x| (x - m) * (x - m))) / (n - 1) as f64;
            Ok(simple(m, var, "mean"))
        }
        EstimatorSpec::Median => Ok(simple(median(&values), f64::NAN, "median")),
        EstimatorSpec::Ecf { u } => ecf_phase_estimator(&values, *u, None),
        EstimatorSpec::IntervalMle => {
            let grid = bin_grid(op).ok_or_else(|| Error::VariantMismatch("interval-mle needs binned observations".into()))?;
            let mut counts = vec![0u64; grid.n_bins];
            for y in data {
                counts[y.bin()?] += 1;
            }
            interval_mle_benchmark(model.clone(), grid, &counts, &pilot(model, &values))
        }
        EstimatorSpec::Sinusoidal { .. } | EstimatorSpec::Score => {
            let psi = functional(spec, model, op)?;
            solve_z(&*psi, data, &pilot(model, &values), cfg.tol, cfg.max_iter)
        }
    }
}

/// Runs `f` on `ChaCha8Rng(seed)` stream `r` for every replication `r`.
fn replicate<T, F>(replications: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let one = |r: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        f(&mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..replications).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..replications).map(one).collect()
    }
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
        return Ok(pool.install(job));
    }
    let _ = workers;
    Ok(job())
}

fn simulate_setting(
    cfg: &ExperimentConfig,
    model_spec: &ModelSpec,
    op: &ObservationOperator,
    setting: &str,
    estimators: &[EstimatorSpec],
    reference_variance: f64,
) -> Result<Vec<SimulationRow>> {
    let model = model_spec.build()?;
    let theta = cfg.theta_for(model_spec)?;
    let outcomes: Vec<Vec<Result<(f64, Option<f64>)>>> = replicate(cfg.replications, cfg.seed, |rng| {
        match sample_observations(op, &*model, &theta, cfg.n, rng) {
            Ok(data) => estimators
                .iter()
                .map(|e| {
                    let r = run_estimator(e, &model, op, &data, cfg)?;
                    let t = r.theta_hat[0];
                    if !t.is_finite() {
                        return Err(Error::DegenerateData(format!("{} returned {t}", e.label())));
                    }
                    let s = r.sandwich[(0, 0)];
                    Ok((t, s.is_finite().then_some(s)))
                })
                .collect(),
            Err(e) => vec![Err(e); estimators.len()],
        }
    });
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let column: Vec<_> = outcomes.iter().map(|row| row[j].clone()).collect();
            SimulationRow::from_errors(model_spec.label(), setting.to_string(), e.label(), &column, theta[0], reference_variance)
        })
        .collect())
}

fn reference_point_variance(model: &SharedModel, theta: &[f64], n: usize) -> f64 {
    fisher_classical(model, theta, &QuadratureSpec::default())
        .ok()
        .and_then(|i| i.try_inverse())
        .map_or(f64::NAN, |inv| inv[(0, 0)] / n as f64)
}

/// Bias, variance, MSE and MAD of each estimator for each model.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<Vec<SimulationRow>> {
    let op = cfg.operators[0].build()?;
    let estimators = cfg.estimators_or(&[EstimatorSpec::Mean, EstimatorSpec::Median, EstimatorSpec::Ecf { u: 1.0 }]);
    let mut rows = Vec::new();
    for m in &cfg.models {
        let model = m.build()?;
        let reference = match op {
            ObservationOperator::Point => reference_point_variance(&model, &cfg.theta_for(m)?, cfg.n),
            _ => f64::NAN,
        };
        rows.extend(simulate_setting(cfg, m, &op, &op.label(), &estimators, reference)?);
    }
    Ok(rows)
}

/// Interval estimators across bin widths, with `1/(n I_O)` as reference.
pub fn run_interval_study(cfg: &ExperimentConfig) -> Result<Vec<SimulationRow>> {
    let estimators = cfg.estimators_or(&[EstimatorSpec::Sinusoidal { c: 1.0 }, EstimatorSpec::IntervalMle]);
    let mut rows = Vec::new();
    for m in &cfg.models {
        let model = m.build()?;
        let theta = cfg.theta_for(m)?;
        for &w in &cfg.bin_widths {
            let op = cfg.operators[0].with_bin_width(w)?.build()?;
            let grid = bin_grid(&op).expect("interval operator");
            let reference = fisher_interval_grid(&*model, grid, &theta, &QuadratureSpec::default(), 1e-5)
                .ok()
                .and_then(|i| i.try_inverse())
                .map_or(f64::NAN, |inv| inv[(0, 0)] / cfg.n as f64);
            rows.extend(simulate_setting(cfg, m, &op, &format!("width={w}"), &estimators, reference)?);
        }
    }
    Ok(rows)
}

/// Hierarchy reports over models × operators × functionals.
pub fn run_info_hierarchy(cfg: &ExperimentConfig) -> Result<Vec<InformationReport>> {
    let functionals = cfg.estimators_or(&[EstimatorSpec::Score, EstimatorSpec::Sinusoidal { c: 1.0 }]);
    let spec = QuadratureSpec::default();
    let mut reports = Vec::new();
    for m in &cfg.models {
        let model = m.build()?;
        let theta = cfg.theta_for(m)?;
        for o in &cfg.operators {
            let op = o.build()?;
            for f in &functionals {
                let psi = functional(f, &model, &op)?;
                reports.push(hierarchy_report(&model, &op, psi, &theta, &spec));
            }
        }
    }
    Ok(reports)
}

/// Sinusoidal efficiency curves for each location family.
pub fn run_are_curve(cfg: &ExperimentConfig) -> Result<Vec<AreCurve>> {
    let grid = cfg.c_grid.points()?;
    cfg.models.iter().map(|m| are_curve(&m.location()?, &grid)).collect()
}

fn read_data(cfg: &ExperimentConfig, model_spec: &ModelSpec, op: &ObservationOperator) -> Result<Vec<Observation>> {
    match &cfg.data {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let field = line.split(',').next().unwrap_or("").trim();
                let x: f64 = field
                    .parse()
                    .map_err(|_| Error::Config(format!("{}:{}: not a number: {field:?}", path.display(), i + 1)))?;
                out.push(crate::observation::observe(op, x)?);
            }
            if out.len() < 2 {
                return Err(Error::Config(format!("{}: need at least 2 observations", path.display())));
            }
            Ok(out)
        }
        None => {
            let model = model_spec.build()?;
            let theta = cfg.theta_for(model_spec)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sample_observations(op, &*model, &theta, cfg.n, &mut rng)
        }
    }
}

/// Each estimator on one data set.
pub fn run_estimate(cfg: &ExperimentConfig) -> Result<Vec<EstimateRow>> {
    let m = &cfg.models[0];
    let model = m.build()?;
    let op = cfg.operators[0].build()?;
    let data = read_data(cfg, m, &op)?;
    let estimators = cfg.estimators_or(&[EstimatorSpec::Median, EstimatorSpec::Ecf { u: 1.0 }, EstimatorSpec::Sinusoidal { c: 1.0 }]);
    estimators
        .iter()
        .map(|e| {
            let r = run_estimator(e, &model, &op, &data, cfg)?;
            Ok(EstimateRow {
                estimator: e.label(),
                std_errors: r.std_errors(),
                theta_hat: r.theta_hat,
                method: r.trace.method,
                iterations: r.trace.iterations,
                residual_norm: r.trace.residual_norm,
            })
        })
        .collect()
}

/// CSV text plus lines meant for standard output.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub csv: String,
    pub stdout: Vec<String>,
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn header_line(cfg: &ExperimentConfig, config_text: &str) -> String {
    format!(
        "# obsinfer {VERSION} experiment={} config_sha256={} seed={} variance_divisor=R-1 mad=median(|theta_hat-theta|) mse=mean((theta_hat-theta)^2)\n",
        cfg.experiment.label(),
        config_hash(config_text),
        cfg.seed
    )
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn to_csv(header: String, columns: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(header.into_bytes());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(columns).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn simulation_csv(header: String, rows: &[SimulationRow]) -> Result<String> {
    let columns = [
        "family",
        "setting",
        "estimator",
        "bias",
        "variance",
        "mse",
        "mad",
        "mean_sandwich_variance",
        "reference_variance",
        "replications",
        "failures",
    ];
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.family.clone(),
                r.setting.clone(),
                r.estimator.clone(),
                num(r.bias),
                num(r.variance),
                num(r.mse),
                num(r.mad),
                num(r.mean_sandwich_variance),
                num(r.reference_variance),
                r.replications.to_string(),
                r.failures.to_string(),
            ]
        })
        .collect();
    to_csv(header, &columns, body)
}

/// Runs the configured experiment.
pub fn execute(cfg: &ExperimentConfig, config_text: &str) -> Result<Artifact> {
    cfg.validate()?;
    let header = header_line(cfg, config_text);
    let workers = resolve_workers(None, cfg.workers);
    with_workers(workers, || execute_inner(cfg, header))?
}

fn execute_inner(cfg: &ExperimentConfig, header: String) -> Result<Artifact> {
    let mut stdout = Vec::new();
    let csv = match cfg.experiment {
        ExperimentKind::Simulate => simulation_csv(header, &run_simulate(cfg)?)?,
        ExperimentKind::IntervalStudy => simulation_csv(header, &run_interval_study(cfg)?)?,
        ExperimentKind::InfoHierarchy => {
            let columns = [
                "model",
                "operator",
                "functional",
                "theta",
                "i_classical",
                "i_o",
                "g",
                "observation_cost_min_eig",
                "estimation_cost_min_eig",
                "holds",
                "flags",
            ];
            let rows = run_info_hierarchy(cfg)?
                .into_iter()
                .map(|r| {
                    let (a, b) = r.gaps();
                    vec![
                        r.model.clone(),
                        r.operator.clone(),
                        r.functional.clone(),
                        r.theta.iter().map(|t| num(*t)).collect::<Vec<_>>().join(";"),
                        num(r.i_classical[(0, 0)]),
                        num(r.i_o[(0, 0)]),
                        num(r.g_psi[(0, 0)]),
                        num(a),
                        num(b),
                        r.holds().to_string(),
                        r.flags.join("; "),
                    ]
                })
                .collect();
            to_csv(header, &columns, rows)?
        }
        ExperimentKind::AreCurve => {
            let columns = ["family", "row", "c", "g", "i_classical", "are", "note"];
            let mut rows = Vec::new();
            for curve in run_are_curve(cfg)? {
                for p in &curve.points {
                    rows.push(vec![curve.family.clone(), "point".into(), num(p.c), num(p.g), num(p.i_classical), num(p.are), String::new()]);
                }
                let a = &curve.argmax;
                rows.push(vec![
                    curve.family.clone(),
                    "argmax".into(),
                    num(a.c),
                    num(a.g),
                    num(a.i_classical),
                    num(a.are),
                    curve.note.clone().unwrap_or_default(),
                ]);
                rows.push(vec![
                    curve.family.clone(),
                    "small-c-limit".into(),
                    "0".into(),
                    String::new(),
                    num(a.i_classical),
                    num(curve.small_c_limit),
                    String::new(),
                ]);
                if let Some(note) = &curve.note {
                    stdout.push(format!("{}: {note}", curve.family));
                }
            }
            to_csv(header, &columns, rows)?
        }
        ExperimentKind::Estimate => {
            let columns = ["estimator", "parameter", "estimate", "std_error", "method", "iterations", "residual_norm"];
            let mut rows = Vec::new();
            for r in run_estimate(cfg)? {
                for (j, (t, se)) in r.theta_hat.iter().zip(&r.std_errors).enumerate() {
                    stdout.push(format!("{} theta[{j}] = {t:.6} ± {se:.6}", r.estimator));
                    rows.push(vec![
                        r.estimator.clone(),
                        j.to_string(),
                        num(*t),
                        num(*se),
                        r.method.clone(),
                        r.iterations.to_string(),
                        num(r.residual_norm),
                    ]);
                }
            }
            to_csv(header, &columns, rows)?
        }
    };
    Ok(Artifact { csv, stdout })
}
