//! The stopping engine.
//!
//! Batch `t` is accepted as the stopping batch when
//! `2 (1 - Phi(eps sqrt(|M(t)|) / (v(t) + a(t)))) <= delta`. The reported
//! estimate is the mean of a batch resampled from the model state at
//! `m(tau - 1)` with an independent branch stream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process::{branch_for_resample, ModelState, ProcessError, ProcessModel};
use crate::schedule::{BatchSchedule, ScheduleError};
use crate::stats::{normal_cdf, BatchAccumulator, RngStream, StreamId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoppingError {
    #[error("invalid stopping configuration: {0}")]
    InvalidConfig(String),
    #[error("{kind} batch variance is not available for this model")]
    VarianceUnavailable { kind: VarianceKind },
    #[error("criterion scale v + a(t) must be positive (got {0})")]
    ZeroScale(f64),
    #[error("primary and branch streams must differ")]
    SharedStreams,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// Which batch variance stands in for the unknown `v_0(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// Sample variance of the batch, divisor `|M(t)| - 1`.
    #[default]
    Empirical,
    /// Average of `Var_{k-1}(X_k)` over the batch.
    Conditional,
    /// Average of `Var_0(X_k)` over the batch; diagnostic only.
    Theoretical,
}

impl fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceKind::Empirical => "empirical",
            VarianceKind::Conditional => "conditional",
            VarianceKind::Theoretical => "theoretical",
        })
    }
}

impl FromStr for VarianceKind {
    type Err = StoppingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "empirical" => Ok(VarianceKind::Empirical),
            "conditional" => Ok(VarianceKind::Conditional),
            "theoretical" => Ok(VarianceKind::Theoretical),
            other => Err(StoppingError::InvalidConfig(format!(
                "unknown variance kind '{other}'"
            ))),
        }
    }
}

/// The vanishing term `a(t)` added to the batch standard deviation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inflation {
    /// `a(t) = 1/t`.
    #[default]
    InvT,
    /// `a(t) = 0`.
    None,
    /// `a(t) = table[t - 1]`; strictly positive and nonincreasing.
    Custom(Vec<f64>),
}

impl Inflation {
    pub fn at(&self, t: u64) -> f64 {
        match self {
            Inflation::InvT => 1.0 / t as f64,
            Inflation::None => 0.0,
            Inflation::Custom(table) => {
                let i = (t.max(1) - 1) as usize;
                table.get(i).or(table.last()).copied().unwrap_or(0.0)
            }
        }
    }

    fn validate(&self, t_max: u64) -> Result<(), StoppingError> {
        if let Inflation::Custom(table) = self {
            if (table.len() as u64) < t_max {
                return Err(StoppingError::InvalidConfig(format!(
                    "inflation table has {} entries but t_max is {t_max}",
                    table.len()
                )));
            }
            if table.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(StoppingError::InvalidConfig(
                    "inflation values must be positive".into(),
                ));
            }
            if table.windows(2).any(|w| w[1] > w[0]) {
                return Err(StoppingError::InvalidConfig(
                    "inflation values must be nonincreasing".into(),
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Inflation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inflation::InvT => f.write_str("inv_t"),
            Inflation::None => f.write_str("none"),
            Inflation::Custom(table) => write!(f, "custom({} entries)", table.len()),
        }
    }
}

impl FromStr for Inflation {
    type Err = StoppingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inv_t" => Ok(Inflation::InvT),
            "none" => Ok(Inflation::None),
            other => Err(StoppingError::InvalidConfig(format!(
                "unknown inflation '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub variance: VarianceKind,
    pub inflation: Inflation,
    pub t_max: u64,
    pub min_batch: u64,
}

impl StoppingConfig {
    pub const DEFAULT_T_MAX: u64 = 64;

    pub fn new(epsilon: f64, delta: f64) -> Self {
        StoppingConfig {
            epsilon,
            delta,
            variance: VarianceKind::Empirical,
            inflation: Inflation::InvT,
            t_max: Self::DEFAULT_T_MAX,
            min_batch: 1,
        }
    }

    pub fn with_variance(mut self, variance: VarianceKind) -> Self {
        self.variance = variance;
        self
    }

    pub fn with_inflation(mut self, inflation: Inflation) -> Self {
        self.inflation = inflation;
        self
    }

    pub fn with_t_max(mut self, t_max: u64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn validate(&self) -> Result<(), StoppingError> {
        let bad = |m: String| Err(StoppingError::InvalidConfig(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} must lie in (0, 1)", self.delta));
        }
        if self.t_max < 1 {
            return bad("t_max must be at least 1".into());
        }
        if self.min_batch < 1 {
            return bad("min_batch must be at least 1".into());
        }
        self.inflation.validate(self.t_max)
    }

    /// Checks that the model can supply the configured variance and that the
    /// schedule reaches `t_max`.
    pub fn validate_for(
        &self,
        model: &dyn ProcessModel,
        schedule: &BatchSchedule,
    ) -> Result<(), StoppingError> {
        self.validate()?;
        let available = match self.variance {
            VarianceKind::Empirical => true,
            VarianceKind::Conditional => model.has_conditional_variance(),
            VarianceKind::Theoretical => model.theoretical_batch_variance(schedule, 1).is_some(),
        };
        if !available {
            return Err(StoppingError::VarianceUnavailable {
                kind: self.variance,
            });
        }
        schedule.batch_bound(self.t_max)?;
        Ok(())
    }
}

/// Statistics of one completed original batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchStats {
    pub t: u64,
    pub size: u64,
    pub mean: f64,
    /// Empirical `v_2^2(t)`; absent when `|M(t)| < 2`.
    pub v2sq: Option<f64>,
    /// Conditional `v_1^2(t)`.
    pub v1sq: Option<f64>,
    /// Theoretical `v_0^2(t)`.
    pub v0sq: Option<f64>,
    /// Divisor-`|M(t)|` sample variance, kept as a diagnostic.
    pub variance_biased: Option<f64>,
}

impl BatchStats {
    pub fn variance(&self, kind: VarianceKind) -> Option<f64> {
        match kind {
            VarianceKind::Empirical => self.v2sq,
            VarianceKind::Conditional => self.v1sq,
            VarianceKind::Theoretical => self.v0sq,
        }
    }
}

/// `2 (1 - Phi(eps sqrt(batch_size) / (v + a)))`.
pub fn criterion_probability(
    epsilon: f64,
    batch_size: f64,
    v: f64,
    a: f64,
) -> Result<f64, StoppingError> {
    let scale = v + a;
    if scale.is_nan() || scale <= 0.0 {
        return Err(StoppingError::ZeroScale(scale));
    }
    // 2 (1 - Phi(w)) = 2 Phi(-w) without cancellation.
    Ok(2.0 * normal_cdf(-epsilon * batch_size.sqrt() / scale))
}

/// Criterion value for a batch, or `None` when the batch cannot be judged
/// (empirical variance of a single-sample batch).
pub fn batch_criterion(cfg: &StoppingConfig, stats: &BatchStats) -> Result<Option<f64>, StoppingError> {
    let var = match stats.variance(cfg.variance) {
        Some(v) => v,
        None if cfg.variance == VarianceKind::Empirical && stats.size < 2 => return Ok(None),
        None => {
            return Err(StoppingError::VarianceUnavailable {
                kind: cfg.variance,
            })
        }
    };
    criterion_probability(
        cfg.epsilon,
        stats.size as f64,
        var.max(0.0).sqrt(),
        cfg.inflation.at(stats.t),
    )
    .map(Some)
}

/// True iff `t >= min_batch` and the criterion is at most `delta`.
pub fn should_stop(cfg: &StoppingConfig, stats: &BatchStats) -> Result<bool, StoppingError> {
    if stats.t < cfg.min_batch {
        return Ok(false);
    }
    Ok(matches!(batch_criterion(cfg, stats)?, Some(c) if c <= cfg.delta))
}

/// Generates original batches one at a time, snapshotting the model at each
/// boundary.
pub struct BatchRunner<'a> {
    model: &'a mut dyn ProcessModel,
    schedule: &'a BatchSchedule,
    stream: &'a mut RngStream,
    t: u64,
    boundary: ModelState,
}

impl<'a> BatchRunner<'a> {
    pub fn new(
        model: &'a mut dyn ProcessModel,
        schedule: &'a BatchSchedule,
        stream: &'a mut RngStream,
    ) -> Self {
        let boundary = model.checkpoint();
        BatchRunner {
            model,
            schedule,
            stream,
            t: 0,
            boundary,
        }
    }

    /// Index of the last completed batch.
    pub fn batches_done(&self) -> u64 {
        self.t
    }

    /// Model state at `m(t-1)` for the last completed batch `t`.
    pub fn boundary_state(&self) -> &ModelState {
        &self.boundary
    }

    pub fn model(&self) -> &dyn ProcessModel {
        &*self.model
    }

    pub fn next_batch(&mut self) -> Result<BatchStats, StoppingError> {
        let t = self.t + 1;
        let size = self.schedule.batch_size(t)?;
        self.boundary = self.model.checkpoint();
        let mut acc = BatchAccumulator::new();
        for _ in 0..size {
            let s = self.model.next_sample(self.stream);
            acc.push(s.value);
            if let Some(v) = s.cond_var {
                acc.push_cond_var(v);
            }
        }
        let stats = BatchStats {
            t,
            size,
            mean: acc.mean().expect("batches are non-empty"),
            v2sq: acc.variance_unbiased().ok(),
            v1sq: acc.conditional_variance(),
            v0sq: self.model.theoretical_batch_variance(self.schedule, t),
            variance_biased: acc.variance_biased().ok(),
        };
        self.model.on_batch_end();
        self.t = t;
        Ok(stats)
    }
}

/// Primary stream for the original path plus the independent branch
/// stream for the resampled batch.
#[derive(Debug, Clone)]
pub struct StreamPair {
    pub primary: RngStream,
    pub branch: RngStream,
}

impl StreamPair {
    pub fn new(id: StreamId) -> Self {
        let id = StreamId { branch: false, ..id };
        StreamPair {
            primary: RngStream::new(id),
            branch: RngStream::new(id.branched()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingOutcome {
    pub tau: u64,
    pub mu_star: f64,
    pub mu_at_stop: f64,
    /// Batch standard deviation `v(tau)` of the configured kind.
    pub v_at_stop: Option<f64>,
    pub total_samples: u64,
    pub criterion: Option<f64>,
    pub hit_cap: bool,
}

/// Runs the stopping rule on a fresh model and returns the resampled output.
///
/// If no batch up to `t_max` satisfies the rule, the run ends at `t_max`
/// with `hit_cap = true`; the resampled estimate is still produced.
pub fn run_stopping(
    model: &mut dyn ProcessModel,
    schedule: &BatchSchedule,
    cfg: &StoppingConfig,
    streams: &mut StreamPair,
) -> Result<StoppingOutcome, StoppingError> {
    cfg.validate_for(&*model, schedule)?;
    if streams.primary.id() == streams.branch.id() {
        return Err(StoppingError::SharedStreams);
    }
    let mut runner = BatchRunner::new(model, schedule, &mut streams.primary);
    loop {
        let stats = runner.next_batch()?;
        let criterion = if stats.t >= cfg.min_batch {
            batch_criterion(cfg, &stats)?
        } else {
            None
        };
        let fired = matches!(criterion, Some(c) if c <= cfg.delta);
        if fired || stats.t >= cfg.t_max {
            let mu_star = branch_for_resample(
                runner.model(),
                runner.boundary_state(),
                &mut streams.branch,
                stats.size,
            )?;
            return Ok(StoppingOutcome {
                tau: stats.t,
                mu_star,
                mu_at_stop: stats.mean,
                v_at_stop: stats.variance(cfg.variance).map(|v| v.max(0.0).sqrt()),
                total_samples: schedule.batch_bound(stats.t)? + stats.size,
                criterion,
                hit_cap: !fired,
            });
        }
    }
}
