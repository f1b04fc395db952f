//! Experiment configuration: a JSON file whose every scalar field has a
//! command-line flag of the same name. Flags win over the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::environments::{StreamSpec, TargetMode};
use crate::error::{Error, Result};
use crate::expert::DEFAULT_DELTA;
use crate::geometry::DecisionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    Meta,
    OgdSc,
    ScAdagrad,
    Adagrad,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Meta,
        Algorithm::OgdSc,
        Algorithm::ScAdagrad,
        Algorithm::Adagrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Meta => "meta",
            Algorithm::OgdSc => "ogd_sc",
            Algorithm::ScAdagrad => "sc_adagrad",
            Algorithm::Adagrad => "adagrad",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algos", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum StreamKind {
    Quadratic,
    SparseRidge,
}

/// Decision set, written `ball`, `ball:R` or `box:LO,HI` (same bounds on
/// every coordinate). Balls are centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetSpec {
    Ball { radius: f64 },
    Box { lower: f64, upper: f64 },
}

impl SetSpec {
    pub fn build(&self, dim: usize) -> Result<DecisionSet> {
        match *self {
            SetSpec::Ball { radius } => DecisionSet::centered_ball(dim, radius),
            SetSpec::Box { lower, upper } => DecisionSet::uniform_box(dim, lower, upper),
        }
    }
}

impl FromStr for SetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::config("set", format!("`{s}`: {why}"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad("expected a number"));
        let (kind, args) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s.trim(), None),
        };
        match (kind, args) {
            ("ball", None) => Ok(SetSpec::Ball { radius: 1.0 }),
            ("ball", Some(r)) => {
                let radius = num(r)?;
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(bad("radius must be positive"));
                }
                Ok(SetSpec::Ball { radius })
            }
            ("box", None) => Ok(SetSpec::Box {
                lower: -1.0,
                upper: 1.0,
            }),
            ("box", Some(bounds)) => {
                let (lo, hi) = bounds.split_once(',').ok_or_else(|| bad("expected box:LO,HI"))?;
                let (lower, upper) = (num(lo)?, num(hi)?);
                if lower.is_nan() || upper.is_nan() || lower >= upper {
                    return Err(bad("lower bound must be below upper bound"));
                }
                Ok(SetSpec::Box { lower, upper })
            }
            _ => Err(bad("expected `ball`, `ball:R` or `box:LO,HI`")),
        }
    }
}

impl fmt::Display for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetSpec::Ball { radius } => write!(f, "ball:{radius}"),
            SetSpec::Box { lower, upper } => write!(f, "box:{lower},{upper}"),
        }
    }
}

/// Partially specified configuration: the JSON file schema and the flag set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Loss stream: quadratic or sparse_ridge.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamKind>,
    /// Horizon T (number of rounds).
    #[arg(long = "T", id = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Dimension d.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Preconditioner stability constant.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Decision set: ball, ball:R or box:LO,HI.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    /// Comma-separated algorithms: meta,ogd_sc,sc_adagrad,adagrad.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algos: Option<Vec<String>>,
    /// Output directory for rounds.csv and bounds.json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Strong-convexity modulus of the losses.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Quadratic stream: iid or constant targets.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetMode>,
    /// Quadratic stream: radius of the ball targets are drawn from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_radius: Option<f64>,
    /// Quadratic stream: explicit constant target, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    /// Sparse ridge stream: nonzeros per feature vector.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    /// Sparse ridge stream: label noise amplitude.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Sparse ridge stream: norm bound of the planted weights.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_radius: Option<f64>,
    /// Step size of the SC-AdaGrad baseline (default 1/(2 lambda)).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sc_adagrad_alpha: Option<f64>,
    /// Step scale of the AdaGrad baseline (default D/sqrt(2)).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adagrad_step_scale: Option<f64>,
}

impl RawConfig {
    /// Fields set in `overrides` replace the ones in `self`.
    pub fn merge(self, overrides: RawConfig) -> RawConfig {
        RawConfig {
            stream: overrides.stream.or(self.stream),
            horizon: overrides.horizon.or(self.horizon),
            d: overrides.d.or(self.d),
            seed: overrides.seed.or(self.seed),
            delta: overrides.delta.or(self.delta),
            set: overrides.set.or(self.set),
            algos: overrides.algos.or(self.algos),
            out: overrides.out.or(self.out),
            lambda: overrides.lambda.or(self.lambda),
            targets: overrides.targets.or(self.targets),
            target_radius: overrides.target_radius.or(self.target_radius),
            target: overrides.target.or(self.target),
            sparsity: overrides.sparsity.or(self.sparsity),
            noise: overrides.noise.or(self.noise),
            weight_radius: overrides.weight_radius.or(self.weight_radius),
            sc_adagrad_alpha: overrides.sc_adagrad_alpha.or(self.sc_adagrad_alpha),
            adagrad_step_scale: overrides.adagrad_step_scale.or(self.adagrad_step_scale),
        }
    }

    pub fn from_json_str(text: &str) -> Result<RawConfig> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }
}

/// Validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stream: StreamSpec,
    pub horizon: usize,
    pub dim: usize,
    pub seed: u64,
    pub delta: f64,
    pub set: SetSpec,
    /// Sorted, deduplicated. The meta learner always runs; the others select
    /// baselines to run alongside it.
    pub algos: Vec<Algorithm>,
    pub sc_adagrad_alpha: Option<f64>,
    pub adagrad_step_scale: Option<f64>,
    pub out: Option<PathBuf>,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let kind = raw
            .stream
            .ok_or_else(|| Error::config("stream", "missing required field"))?;
        let horizon = raw
            .horizon
            .ok_or_else(|| Error::config("T", "missing required field"))?;
        if horizon == 0 {
            return Err(Error::config("T", "horizon must be at least 1"));
        }
        let dim = raw.d.ok_or_else(|| Error::config("d", "missing required field"))?;
        if dim == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        let delta = positive("delta", raw.delta.unwrap_or(DEFAULT_DELTA))?;
        let lambda = positive("lambda", raw.lambda.unwrap_or(1.0))?;
        let set: SetSpec = raw.set.as_deref().unwrap_or("ball").parse()?;

        let quadratic_only = [
            ("targets", raw.targets.is_some()),
            ("target_radius", raw.target_radius.is_some()),
            ("target", raw.target.is_some()),
        ];
        let ridge_only = [
            ("sparsity", raw.sparsity.is_some()),
            ("noise", raw.noise.is_some()),
            ("weight_radius", raw.weight_radius.is_some()),
        ];
        let (foreign, stream) = match kind {
            StreamKind::Quadratic => (
                ridge_only,
                StreamSpec::Quadratic {
                    lambda,
                    targets: raw.targets.unwrap_or(TargetMode::Iid),
                    target_radius: raw.target_radius.unwrap_or(1.0),
                    target: raw.target,
                },
            ),
            StreamKind::SparseRidge => (
                quadratic_only,
                StreamSpec::SparseRidge {
                    lambda,
                    sparsity: raw.sparsity.unwrap_or(dim.div_ceil(4)),
                    noise: raw.noise.unwrap_or(0.1),
                    weight_radius: raw.weight_radius.unwrap_or(1.0),
                },
            ),
        };
        if let Some((field, _)) = foreign.iter().find(|(_, set)| *set) {
            return Err(Error::config(*field, "not a parameter of the selected stream"));
        }
        stream.validate(dim)?;

        let mut algos = match raw.algos {
            Some(list) => list
                .iter()
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<Algorithm>>>()?,
            None => Algorithm::ALL.to_vec(),
        };
        if algos.is_empty() {
            return Err(Error::config("algos", "at least one algorithm is required"));
        }
        algos.push(Algorithm::Meta);
        algos.sort();
        algos.dedup();

        let sc_adagrad_alpha = raw
            .sc_adagrad_alpha
            .map(|a| positive("sc_adagrad_alpha", a))
            .transpose()?;
        let adagrad_step_scale = raw
            .adagrad_step_scale
            .map(|a| positive("adagrad_step_scale", a))
            .transpose()?;

        Ok(ExperimentConfig {
            stream,
            horizon,
            dim,
            seed: raw.seed.unwrap_or(0),
            delta,
            set,
            algos,
            sc_adagrad_alpha,
            adagrad_step_scale,
            out: raw.out,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::from_json_str(text)?)
    }

    pub fn decision_set(&self) -> Result<DecisionSet> {
        self.set.build(self.dim)
    }

    pub fn runs(&self, algo: Algorithm) -> bool {
        self.algos.contains(&algo)
    }

    /// Same experiment at another horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        ExperimentConfig {
            horizon,
            ..self.clone()
        }
    }

    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig {
            horizon: Some(self.horizon),
            d: Some(self.dim),
            seed: Some(self.seed),
            delta: Some(self.delta),
            set: Some(self.set.to_string()),
            algos: Some(self.algos.iter().map(|a| a.name().to_string()).collect()),
            out: self.out.clone(),
            lambda: Some(self.stream.lambda()),
            sc_adagrad_alpha: self.sc_adagrad_alpha,
            adagrad_step_scale: self.adagrad_step_scale,
            ..RawConfig::default()
        };
        match &self.stream {
            StreamSpec::Quadratic {
                targets,
                target_radius,
                target,
                ..
            } => {
                raw.stream = Some(StreamKind::Quadratic);
                raw.targets = Some(*targets);
                raw.target_radius = Some(*target_radius);
                raw.target = target.clone();
            }
            StreamSpec::SparseRidge {
                sparsity,
                noise,
                weight_radius,
                ..
            } => {
                raw.stream = Some(StreamKind::SparseRidge);
                raw.sparsity = Some(*sparsity);
                raw.noise = Some(*noise);
                raw.weight_radius = Some(*weight_radius);
            }
        }
        raw
    }
}

/// Reads the optional config file, applies flag overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: RawConfig) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => RawConfig::from_json_str(&std::fs::read_to_string(p)?)?,
        None => RawConfig::default(),
    };
    ExperimentConfig::from_raw(base.merge(overrides))
}
