//! Statistical kernel: standard normal CDF and quantile, batch moment
//! accumulation, and reproducible random streams.

mod accumulator;
mod normal;
mod rng;

pub use accumulator::{BatchAccumulator, Moments};
pub use normal::{normal_cdf, normal_pdf, normal_quantile, normal_quantile_unpolished};
pub use rng::{sample_scaled_t, Purpose, RngStream, ScaledStudentT, StreamId};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("degrees of freedom must be at least 5 (got {0})")]
    DegreesOfFreedom(u32),
    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: u64, have: u64 },
}
