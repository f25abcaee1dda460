//! Branchable sample generators.
//!
//! A [`ProcessModel`] produces `X_1, X_2, ...` with `E[X_k | past] = mu`. The
//! engine snapshots its state at every batch boundary so that a fresh batch
//! can later be resampled from the state at `m(tau - 1)`.
//!
//! The true mean lives on [`ModelSpec`], never on the model itself, so the
//! stopping engine has no way to read it.

mod arch;
mod control_variate;
mod iid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arch::Arch1Model;
pub use control_variate::{ControlVariateModel, Integrand};
pub use iid::{IidDistribution, IidModel};

use crate::schedule::BatchSchedule;
use crate::stats::{RngStream, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("checkpoint of kind '{found}' cannot restore a '{expected}' model")]
    StateMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse model '{0}': expected iid:<normal|uniform>:<mean>:<variance>, arch1:<alpha>:<beta>:<dof>, cv:usq_half[:crude] or cv:poly:<c0,c1,..>[;<c0,..>][:crude]")]
    Parse(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// One draw: the value `X_k` and, when the model knows it in closed form,
/// `Var_{k-1}(X_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub cond_var: Option<f64>,
}

/// Opaque snapshot of a model's mutable state.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Iid,
    Arch1 {
        lag: f64,
    },
    ControlVariate {
        theta: Vec<f64>,
        cross_sum: Vec<f64>,
        count: u64,
    },
}

impl ModelState {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelState::Iid => "iid",
            ModelState::Arch1 { .. } => "arch1",
            ModelState::ControlVariate { .. } => "cv",
        }
    }
}

pub trait ProcessModel: Send {
    /// Short kind tag, matching [`ModelState::kind`].
    fn kind(&self) -> &'static str;

    fn next_sample(&mut self, stream: &mut RngStream) -> Sample;

    fn checkpoint(&self) -> ModelState;

    fn restore(&mut self, state: &ModelState) -> Result<(), ProcessError>;

    /// Called after the last sample of every original batch, before the
    /// next batch begins. Resampled batches never trigger it.
    fn on_batch_end(&mut self) {}

    /// Whether every sample carries a conditional variance.
    fn has_conditional_variance(&self) -> bool;

    /// `v_0^2(t) = (1/|M(t)|) sum_{k in M(t)} Var_0(X_k)`, when known.
    fn theoretical_batch_variance(&self, schedule: &BatchSchedule, t: u64) -> Option<f64>;

    /// Independent copy with identical state.
    fn fork(&self) -> Box<dyn ProcessModel>;
}

/// Resampled batch mean `mu_star`: restores `checkpoint` on a copy of
/// `model`, draws `batch_len` fresh samples from `stream` and averages them.
/// The original model is not touched and no per-batch update is applied.
pub fn branch_for_resample(
    model: &dyn ProcessModel,
    checkpoint: &ModelState,
    stream: &mut RngStream,
    batch_len: u64,
) -> Result<f64, ProcessError> {
    if batch_len == 0 {
        return Err(ProcessError::InvalidParameter(
            "resampled batch must be non-empty".into(),
        ));
    }
    let mut branch = model.fork();
    branch.restore(checkpoint)?;
    let mut sum = 0.0;
    for _ in 0..batch_len {
        sum += branch.next_sample(stream).value;
    }
    Ok(sum / batch_len as f64)
}

/// Parsed model configuration; doubles as the model factory and carries the
/// true mean used only for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    Iid {
        distribution: IidDistribution,
        mean: f64,
        variance: f64,
    },
    Arch1 {
        alpha: f64,
        beta: f64,
        dof: u32,
    },
    ControlVariate {
        integrand: Integrand,
        adaptive: bool,
    },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Arch1 {
            alpha: 0.03,
            beta: 0.3,
            dof: 6,
        }
    }
}

impl ModelSpec {
    /// Builds a fresh model in its initial state.
    pub fn build(&self) -> Result<Box<dyn ProcessModel>, ProcessError> {
        Ok(match self {
            ModelSpec::Iid {
                distribution,
                mean,
                variance,
            } => Box::new(IidModel::new(*distribution, *mean, *variance)?),
            ModelSpec::Arch1 { alpha, beta, dof } => {
                Box::new(Arch1Model::new(*alpha, *beta, *dof)?)
            }
            ModelSpec::ControlVariate {
                integrand,
                adaptive,
            } => {
                let model = ControlVariateModel::new(integrand.clone());
                Box::new(if *adaptive { model } else { model.crude() })
            }
        })
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        self.build().map(|_| ())
    }

    /// The mean being estimated. For evaluation only.
    pub fn true_mean(&self) -> f64 {
        match self {
            ModelSpec::Iid { mean, .. } => *mean,
            ModelSpec::Arch1 { .. } => 0.0,
            ModelSpec::ControlVariate { integrand, .. } => integrand.mean(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Iid {
                distribution,
                mean,
                variance,
            } => write!(f, "iid:{distribution}:{mean}:{variance}"),
            ModelSpec::Arch1 { alpha, beta, dof } => write!(f, "arch1:{alpha}:{beta}:{dof}"),
            ModelSpec::ControlVariate {
                integrand,
                adaptive,
            } => {
                write!(f, "cv:{integrand}")?;
                if !adaptive {
                    write!(f, ":crude")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ModelSpec {
    type Err = ProcessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || ProcessError::Parse(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| parse_err());
        let spec = match parts.as_slice() {
            ["iid", dist, mean, var] => ModelSpec::Iid {
                distribution: dist.parse().map_err(|_| parse_err())?,
                mean: num(mean)?,
                variance: num(var)?,
            },
            ["arch1"] => ModelSpec::default(),
            ["arch1", alpha, beta, dof] => ModelSpec::Arch1 {
                alpha: num(alpha)?,
                beta: num(beta)?,
                dof: dof.trim().parse().map_err(|_| parse_err())?,
            },
            ["cv", rest @ ..] => {
                let (rest, adaptive) = match rest {
                    [head @ .., "crude"] => (head, false),
                    _ => (rest, true),
                };
                let integrand = match rest {
                    ["usq_half"] => Integrand::usq_half(),
                    ["poly", coeffs] => Integrand::parse_polynomials(coeffs)?,
                    _ => return Err(parse_err()),
                };
                ModelSpec::ControlVariate {
                    integrand,
                    adaptive,
                }
            }
            _ => return Err(parse_err()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = ProcessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(spec: ModelSpec) -> String {
        spec.to_string()
    }
}
