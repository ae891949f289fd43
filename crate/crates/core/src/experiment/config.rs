//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelProfile;
use crate::models::{cauchy_location, gaussian_location, location_scale, student_t_location, Base, Location, SharedModel};
use crate::observation::{BinGrid, ObservationOperator, TailPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    InfoHierarchy,
    AreCurve,
    Estimate,
    IntervalStudy,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::InfoHierarchy => "info-hierarchy",
            ExperimentKind::AreCurve => "are-curve",
            ExperimentKind::Estimate => "estimate",
            ExperimentKind::IntervalStudy => "interval-study",
        }
    }
}

/// A latent family. Location families take `θ = (μ)`, location-scale ones `θ = (μ, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Normal {
        #[serde(default = "one")]
        sigma: f64,
    },
    Cauchy,
    Student {
        nu: f64,
    },
    LocationScale {
        base: Base,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn location(&self) -> Result<Location> {
        match *self {
            ModelSpec::Normal { sigma } => gaussian_location(sigma),
            ModelSpec::Cauchy => Ok(cauchy_location()),
            ModelSpec::Student { nu } => student_t_location(nu),
            ModelSpec::LocationScale { .. } => Err(Error::Config("a location family is required here".into())),
        }
    }

    pub fn build(&self) -> Result<SharedModel> {
        match *self {
            ModelSpec::LocationScale { base } => Ok(Arc::new(location_scale(base)?)),
            _ => Ok(Arc::new(self.location()?)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ModelSpec::Normal { sigma } if sigma == 1.0 => "normal".into(),
            ModelSpec::Normal { sigma } => format!("normal(sigma={sigma})"),
            ModelSpec::Cauchy => "cauchy".into(),
            ModelSpec::Student { nu } => format!("t(nu={nu})"),
            ModelSpec::LocationScale { base } => format!("{}-location-scale", base.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    #[default]
    Point,
    /// Gaussian re-weighting; omitting `sigma_phi` gives the classical limit.
    Kernel {
        sigma_phi: Option<f64>,
        #[serde(default)]
        center: f64,
    },
    /// Bins of width `bin_width` covering `center ± half_span`, or starting at `left_edge`.
    Interval {
        bin_width: f64,
        #[serde(default = "default_half_span")]
        half_span: f64,
        #[serde(default)]
        center: f64,
        left_edge: Option<f64>,
        #[serde(default)]
        tail_policy: TailPolicy,
    },
}

fn default_half_span() -> f64 {
    4.0
}

impl OperatorSpec {
    pub fn build(&self) -> Result<ObservationOperator> {
        let op = match *self {
            OperatorSpec::Point => ObservationOperator::Point,
            OperatorSpec::Kernel { sigma_phi, center } => {
                let kernel = match sigma_phi {
                    Some(s) => KernelProfile::gaussian(s)?.centered_at(center),
                    None => KernelProfile::classical(),
                };
                ObservationOperator::KernelWeighted { kernel }
            }
            OperatorSpec::Interval { bin_width, half_span, center, left_edge, tail_policy } => {
                let grid = match left_edge {
                    Some(left) => {
                        let n_bins = ((2.0 * half_span / bin_width).ceil() as usize).max(2);
                        BinGrid::new(left, bin_width, n_bins, tail_policy)?
                    }
                    None => BinGrid { tail_policy, ..BinGrid::covering(center, half_span, bin_width)? },
                };
                ObservationOperator::Interval { grid }
            }
        };
        op.validate()?;
        Ok(op)
    }

    /// The same operator with a different bin width.
    pub fn with_bin_width(&self, width: f64) -> Result<Self> {
        match self.clone() {
            OperatorSpec::Interval { half_span, center, left_edge, tail_policy, .. } => {
                Ok(OperatorSpec::Interval { bin_width: width, half_span, center, left_edge, tail_policy })
            }
            _ => Ok(OperatorSpec::Interval {
                bin_width: width,
                half_span: default_half_span(),
                center: 0.0,
                left_edge: None,
                tail_policy: TailPolicy::OpenTails,
            }),
        }
    }
}

/// An estimator or, for the information audit, an inference functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Mean,
    Median,
    /// ECF phase estimator at frequency `u`.
    Ecf {
        #[serde(default = "one")]
        u: f64,
    },
    /// Root of the sinusoidal equation; on binned data the bin-averaged form.
    Sinusoidal {
        c: f64,
    },
    /// Root of the score equation; on binned data the multinomial bin score.
    Score,
    /// Interval-censored maximum likelihood.
    IntervalMle,
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Mean => "mean".into(),
            EstimatorSpec::Median => "median".into(),
            EstimatorSpec::Ecf { u } => format!("ecf(u={u})"),
            EstimatorSpec::Sinusoidal { c } => format!("sinusoidal(c={c})"),
            EstimatorSpec::Score => "score".into(),
            EstimatorSpec::IntervalMle => "interval-mle".into(),
        }
    }

    fn tuning(&self) -> Option<f64> {
        match *self {
            EstimatorSpec::Ecf { u } => Some(u),
            EstimatorSpec::Sinusoidal { c } => Some(c),
            _ => None,
        }
    }
}

fn default_n() -> usize {
    100
}

fn default_replications() -> usize {
    2000
}

fn default_models() -> Vec<ModelSpec> {
    vec![ModelSpec::Student { nu: 3.0 }]
}

fn default_operators() -> Vec<OperatorSpec> {
    vec![OperatorSpec::Point]
}

/// `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Config(format!("invalid grid {self:?}")));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

fn default_c_grid() -> GridSpec {
    GridSpec { start: 0.05, stop: 3.0, step: 0.01 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// True parameter; defaults to 0 for location and (0, 1) for location-scale families.
    pub theta: Option<Vec<f64>>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
    /// Operators crossed with models in `info-hierarchy`; the first is used elsewhere.
    #[serde(default = "default_operators")]
    pub operators: Vec<OperatorSpec>,
    /// Estimators, or functionals for `info-hierarchy`; each experiment has its own default.
    pub estimators: Option<Vec<EstimatorSpec>>,
    /// Tuning grid for `are-curve`.
    #[serde(default = "default_c_grid")]
    pub c_grid: GridSpec,
    /// Bin widths for `interval-study`.
    #[serde(default)]
    pub bin_widths: Vec<f64>,
    /// Observations for `estimate`, one value per line; simulated when absent.
    pub data: Option<PathBuf>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` for a given experiment; a conflicting `experiment` key is an error.
    pub fn from_toml_for(text: &str, kind: ExperimentKind) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match table.get("experiment").and_then(|v| v.as_str()) {
            Some(given) if given != kind.label() => {
                return Err(Error::Config(format!("config is for {given:?}, not {:?}", kind.label())));
            }
            _ => {
                table.insert("experiment".into(), toml::Value::String(kind.label().into()));
            }
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.operators.is_empty() {
            return bad("at least one operator is required".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("solver tolerance and iteration cap must be positive".into());
        }
        if self.estimators.as_ref().is_some_and(|e| e.is_empty()) {
            return bad("the estimator list is empty".into());
        }
        for e in self.estimators.iter().flatten() {
            if let Some(t) = e.tuning() {
                if !(t > 0.0) || !t.is_finite() {
                    return bad(format!("tuning constant of {} must be positive", e.label()));
                }
            }
        }
        if self.bin_widths.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return bad("bin widths must be positive".into());
        }
        if self.experiment == ExperimentKind::IntervalStudy && self.bin_widths.is_empty() {
            return bad("interval-study needs bin_widths".into());
        }
        self.c_grid.points()?;
        for m in &self.models {
            m.build().map_err(|e| Error::Config(format!("model {}: {e}", m.label())))?;
            self.theta_for(m)?;
        }
        for o in &self.operators {
            o.build().map_err(|e| Error::Config(format!("operator: {e}")))?;
        }
        Ok(())
    }

    pub fn estimators_or(&self, default: &[EstimatorSpec]) -> Vec<EstimatorSpec> {
        self.estimators.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn theta_for(&self, model: &ModelSpec) -> Result<Vec<f64>> {
        let default = match model {
            ModelSpec::LocationScale { .. } => vec![0.0, 1.0],
            _ => vec![0.0],
        };
        let theta = self.theta.clone().unwrap_or(default);
        model.build()?.check_theta(&theta).map_err(|e| Error::Config(e.to_string()))?;
        Ok(theta)
    }
}
