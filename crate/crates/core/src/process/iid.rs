use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModelState, ProcessError, ProcessModel, Sample};
use crate::schedule::BatchSchedule;
use crate::stats::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IidDistribution {
    Normal,
    /// Uniform on `mean +- sqrt(3 * variance)`.
    Uniform,
}

impl fmt::Display for IidDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IidDistribution::Normal => "normal",
            IidDistribution::Uniform => "uniform",
        })
    }
}

impl FromStr for IidDistribution {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "normal" => Ok(IidDistribution::Normal),
            "uniform" => Ok(IidDistribution::Uniform),
            _ => Err(()),
        }
    }
}

/// Independent draws with a fixed law; the baseline case where the
/// martingale structure is trivial.
#[derive(Debug, Clone)]
pub struct IidModel {
    distribution: IidDistribution,
    mean: f64,
    variance: f64,
    std_dev: f64,
}

impl IidModel {
    pub fn new(distribution: IidDistribution, mean: f64, variance: f64) -> Result<Self, ProcessError> {
        if !mean.is_finite() {
            return Err(ProcessError::InvalidParameter(format!("mean {mean}")));
        }
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(ProcessError::InvalidParameter(format!(
                "variance {variance} must be finite and non-negative"
            )));
        }
        Ok(IidModel {
            distribution,
            mean,
            variance,
            std_dev: variance.sqrt(),
        })
    }
}

impl ProcessModel for IidModel {
    fn kind(&self) -> &'static str {
        "iid"
    }

    fn next_sample(&mut self, stream: &mut RngStream) -> Sample {
        let noise = match self.distribution {
            IidDistribution::Normal => stream.standard_normal(),
            IidDistribution::Uniform => 12f64.sqrt() * (stream.uniform() - 0.5),
        };
        Sample {
            value: self.mean + self.std_dev * noise,
            cond_var: Some(self.variance),
        }
    }

    fn checkpoint(&self) -> ModelState {
        ModelState::Iid
    }

    fn restore(&mut self, state: &ModelState) -> Result<(), ProcessError> {
        match state {
            ModelState::Iid => Ok(()),
            other => Err(ProcessError::StateMismatch {
                expected: "iid",
                found: other.kind(),
            }),
        }
    }

    fn has_conditional_variance(&self) -> bool {
        true
    }

    fn theoretical_batch_variance(&self, _schedule: &BatchSchedule, _t: u64) -> Option<f64> {
        Some(self.variance)
    }

    fn fork(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
