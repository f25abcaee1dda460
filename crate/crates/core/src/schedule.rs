//! Deterministic batch boundaries.
//!
//! A schedule fixes `m(0) = 0 < m(1) < m(2) < ...`; batch `t` holds the
//! samples with 1-based indices `m(t-1)+1 ..= m(t)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("polynomial exponent must be at least 1")]
    ZeroExponent,
    #[error("explicit schedule must be non-empty")]
    EmptyExplicit,
    #[error("explicit schedule must be strictly increasing and positive (offending position {0})")]
    NotIncreasing(usize),
    #[error("batch index {t} is outside the schedule (last batch is {last})")]
    OutOfRange { t: u64, last: u64 },
    #[error("batch size is defined for t >= 1")]
    ZeroBatch,
    #[error("m({0}) overflows a 64-bit sample count")]
    Overflow(u64),
    #[error("cannot parse schedule '{0}': expected 'poly:<exponent>' or 'explicit:<m1>,<m2>,...'")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BatchSchedule {
    /// `m(t) = t^exponent`.
    Polynomial { exponent: u32 },
    /// `m(1), m(2), ...` listed explicitly; `m(0) = 0` is implied.
    Explicit(Vec<u64>),
}

impl Default for BatchSchedule {
    fn default() -> Self {
        BatchSchedule::Polynomial { exponent: 5 }
    }
}

impl BatchSchedule {
    pub fn polynomial(exponent: u32) -> Result<Self, ScheduleError> {
        if exponent == 0 {
            return Err(ScheduleError::ZeroExponent);
        }
        Ok(BatchSchedule::Polynomial { exponent })
    }

    pub fn explicit(bounds: Vec<u64>) -> Result<Self, ScheduleError> {
        if bounds.is_empty() {
            return Err(ScheduleError::EmptyExplicit);
        }
        let mut prev = 0u64;
        for (i, &b) in bounds.iter().enumerate() {
            if b <= prev {
                return Err(ScheduleError::NotIncreasing(i + 1));
            }
            prev = b;
        }
        Ok(BatchSchedule::Explicit(bounds))
    }

    /// Largest batch index whose bound is representable.
    pub fn last_batch(&self) -> u64 {
        match self {
            BatchSchedule::Polynomial { exponent } => {
                // Largest t with t^exponent <= u64::MAX, found by bisection on checked_pow.
                let (mut lo, mut hi) = (1u64, u64::MAX);
                while lo < hi {
                    let mid = lo + (hi - lo).div_ceil(2);
                    if pow_checked(mid, *exponent).is_some() {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                lo
            }
            BatchSchedule::Explicit(b) => b.len() as u64,
        }
    }

    /// Cumulative sample count `m(t)`.
    pub fn batch_bound(&self, t: u64) -> Result<u64, ScheduleError> {
        if t == 0 {
            return Ok(0);
        }
        match self {
            BatchSchedule::Polynomial { exponent } => {
                pow_checked(t, *exponent).ok_or(ScheduleError::Overflow(t))
            }
            BatchSchedule::Explicit(b) => b
                .get((t - 1) as usize)
                .copied()
                .ok_or(ScheduleError::OutOfRange {
                    t,
                    last: b.len() as u64,
                }),
        }
    }

    /// Batch cardinality `|M(t)| = m(t) - m(t-1)`.
    pub fn batch_size(&self, t: u64) -> Result<u64, ScheduleError> {
        if t == 0 {
            return Err(ScheduleError::ZeroBatch);
        }
        Ok(self.batch_bound(t)? - self.batch_bound(t - 1)?)
    }

    /// 1-based sample index range of batch `t`.
    pub fn batch_indices(&self, t: u64) -> Result<std::ops::RangeInclusive<u64>, ScheduleError> {
        if t == 0 {
            return Err(ScheduleError::ZeroBatch);
        }
        let start = self.batch_bound(t - 1)? + 1;
        Ok(start..=self.batch_bound(t)?)
    }
}

fn pow_checked(base: u64, exponent: u32) -> Option<u64> {
    base.checked_pow(exponent)
}

impl fmt::Display for BatchSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSchedule::Polynomial { exponent } => write!(f, "poly:{exponent}"),
            BatchSchedule::Explicit(b) => {
                write!(f, "explicit:")?;
                for (i, v) in b.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for BatchSchedule {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || ScheduleError::Parse(s.to_string());
        let (kind, rest) = s.trim().split_once(':').ok_or_else(parse_err)?;
        match kind {
            "poly" => {
                let exponent: u32 = rest.trim().parse().map_err(|_| parse_err())?;
                BatchSchedule::polynomial(exponent)
            }
            "explicit" => {
                let bounds = rest
                    .split(',')
                    .map(|v| v.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| parse_err())?;
                BatchSchedule::explicit(bounds)
            }
            _ => Err(parse_err()),
        }
    }
}

impl TryFrom<String> for BatchSchedule {
    type Error = ScheduleError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BatchSchedule> for String {
    fn from(schedule: BatchSchedule) -> String {
        schedule.to_string()
    }
}
