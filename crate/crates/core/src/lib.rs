//! Sequential stopping rules for Monte Carlo estimation of the mean of a
//! martingale-difference-type sequence.
//!
//! The sample path is cut into deterministic batches `M(t) = {m(t-1)+1, ..., m(t)}`.
//! After each batch the engine evaluates
//!
//! ```text
//! 2 (1 - Phi(eps * sqrt(|M(t)|) / (v(t) + a(t)))) <= delta
//! ```
//!
//! with `v(t)` one of the batch standard deviations (empirical, conditional or
//! theoretical) and `a(t)` a vanishing inflation term. When the rule fires at
//! batch `tau`, the output is not the batch mean of the original path but the
//! mean of a fresh batch resampled from the process state at `m(tau - 1)`,
//! which makes the estimator unbiased.
//!
//! Modules:
//! - [`schedule`]: batch boundaries `m(t)` and sizes `|M(t)|`.
//! - [`stats`]: normal CDF/quantile, batch accumulators, reproducible random streams.
//! - [`process`]: branchable sample generators (iid, ARCH(1), adaptive control variates).
//! - [`stopping`]: the stopping engine and resampled output.
//! - [`harness`]: reliability/complexity evaluation over an `(eps, delta)` grid.
//! - [`verify`]: numerical oracle checks used by the `verify` command.

pub mod harness;
pub mod process;
pub mod schedule;
pub mod stats;
pub mod stopping;
pub mod verify;

pub use harness::{build_grid, evaluate, summarize, EvalGrid, EvalSetup, GridReport, Summary};
pub use process::{branch_for_resample, ModelSpec, ModelState, ProcessModel, Sample};
pub use schedule::BatchSchedule;
pub use stats::{normal_cdf, normal_quantile, BatchAccumulator, Purpose, RngStream, StreamId};
pub use stopping::{
    criterion_probability, run_stopping, should_stop, BatchRunner, BatchStats, Inflation,
    StoppingConfig, StoppingOutcome, VarianceKind,
};
