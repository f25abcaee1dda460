//! Reliability and complexity over an `(eps, delta)` grid.
//!
//! For each cell the stopping rule is run `n` times with independent
//! streams keyed by `(base_seed, cell, run)`. A run succeeds when
//! `|mu* - mu| <= eps`; capped runs count as failures. Per cell:
//! `p = successes / n`, `R = p / (1 - delta)` and
//! `CM = mean(tau^l - (tau - 1)^l)`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process::ModelSpec;
use crate::schedule::BatchSchedule;
use crate::stats::{Purpose, StreamId};
use crate::stopping::{
    run_stopping, Inflation, StoppingConfig, StoppingError, StoppingOutcome, StreamPair,
    VarianceKind,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("runs per cell must be at least 1")]
    NoRuns,
    #[error("cell {cell}, run {run}: {source}")]
    Run {
        cell: usize,
        run: u64,
        source: StoppingError,
    },
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

/// Log-spaced `eps` and `delta` axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
}

impl EvalGrid {
    pub fn points(&self) -> usize {
        self.eps.len()
    }

    pub fn cell_count(&self) -> usize {
        self.eps.len() * self.delta.len()
    }

    /// Cells are ordered eps-major: `cell = i_eps * delta.len() + i_delta`.
    pub fn cell(&self, index: usize) -> (f64, f64) {
        let n = self.delta.len();
        (self.eps[index / n], self.delta[index % n])
    }
}

fn log_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..points)
        .map(|i| match i {
            0 => lo,
            i if i == points - 1 => hi,
            i => lo * ratio.powf(i as f64 / (points - 1) as f64),
        })
        .collect()
}

pub fn build_grid(a1: f64, a2: f64, b1: f64, b2: f64, points: usize) -> Result<EvalGrid, HarnessError> {
    let bad = |m: String| Err(HarnessError::InvalidGrid(m));
    if !(a1 > 0.0 && a1 < a2 && a2.is_finite()) {
        return bad(format!("eps range {a1}:{a2} needs 0 < a1 < a2"));
    }
    if !(b1 > 0.0 && b1 < b2 && b2 < 1.0) {
        return bad(format!("delta range {b1}:{b2} needs 0 < b1 < b2 < 1"));
    }
    if points < 2 {
        return bad(format!("{points} points per axis; at least 2 needed"));
    }
    Ok(EvalGrid {
        eps: log_axis(a1, a2, points),
        delta: log_axis(b1, b2, points),
    })
}

/// Everything except the grid that determines an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    pub model: ModelSpec,
    pub schedule: BatchSchedule,
    pub variance: VarianceKind,
    pub inflation: Inflation,
    pub t_max: u64,
    pub runs: u64,
    pub ell: u32,
    pub base_seed: u64,
}

impl Default for EvalSetup {
    fn default() -> Self {
        EvalSetup {
            model: ModelSpec::default(),
            schedule: BatchSchedule::default(),
            variance: VarianceKind::Empirical,
            inflation: Inflation::InvT,
            t_max: StoppingConfig::DEFAULT_T_MAX,
            runs: 5000,
            ell: 5,
            base_seed: 0,
        }
    }
}

impl EvalSetup {
    pub fn stopping_config(&self, eps: f64, delta: f64) -> StoppingConfig {
        StoppingConfig::new(eps, delta)
            .with_variance(self.variance)
            .with_inflation(self.inflation.clone())
            .with_t_max(self.t_max)
    }

    pub fn streams(&self, cell: usize, run: u64) -> StreamPair {
        StreamPair::new(
            StreamId::new(self.base_seed, Purpose::Evaluate)
                .with_grid(cell as u64)
                .with_run(run),
        )
    }

    /// One stopped run of cell `cell`.
    pub fn run_one(&self, grid: &EvalGrid, cell: usize, run: u64) -> Result<StoppingOutcome, HarnessError> {
        let (eps, delta) = grid.cell(cell);
        let cfg = self.stopping_config(eps, delta);
        let mut model = self
            .model
            .build()
            .map_err(|e| HarnessError::Stopping(e.into()))?;
        let mut streams = self.streams(cell, run);
        run_stopping(&mut *model, &self.schedule, &cfg, &mut streams)
            .map_err(|source| HarnessError::Run { cell, run, source })
    }
}

/// `tau^l - (tau - 1)^l`.
pub fn complexity_term(tau: u64, ell: u32) -> f64 {
    let t = tau as f64;
    t.powi(ell as i32) - (t - 1.0).powi(ell as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub eps: f64,
    pub delta: f64,
    pub runs: u64,
    pub successes: u64,
    pub p: f64,
    pub reliability: f64,
    pub complexity: f64,
    pub mean_tau: f64,
    pub capped: u64,
    pub mean_total_samples: f64,
}

impl CellResult {
    pub fn from_outcomes(
        eps: f64,
        delta: f64,
        mu: f64,
        ell: u32,
        outcomes: &[StoppingOutcome],
    ) -> Self {
        let n = outcomes.len() as u64;
        let nf = n as f64;
        let successes = outcomes
            .iter()
            .filter(|o| !o.hit_cap && (o.mu_star - mu).abs() <= eps)
            .count() as u64;
        let p = successes as f64 / nf;
        CellResult {
            eps,
            delta,
            runs: n,
            successes,
            p,
            reliability: p / (1.0 - delta),
            complexity: outcomes.iter().map(|o| complexity_term(o.tau, ell)).sum::<f64>() / nf,
            mean_tau: outcomes.iter().map(|o| o.tau as f64).sum::<f64>() / nf,
            capped: outcomes.iter().filter(|o| o.hit_cap).count() as u64,
            mean_total_samples: outcomes.iter().map(|o| o.total_samples as f64).sum::<f64>() / nf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub schedule: String,
    pub variance: VarianceKind,
    pub inflation: Inflation,
    pub t_max: u64,
    pub runs: u64,
    pub ell: u32,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub meta: ReportMeta,
    pub grid: EvalGrid,
    pub cells: Vec<CellResult>,
}

/// Runs every `(cell, run)` pair, in parallel on the current rayon pool.
/// The result does not depend on the pool size.
pub fn evaluate(setup: &EvalSetup, grid: &EvalGrid) -> Result<GridReport, HarnessError> {
    if setup.runs < 1 {
        return Err(HarnessError::NoRuns);
    }
    setup.model.validate().map_err(|e| HarnessError::Stopping(e.into()))?;
    let probe = setup.model.build().map_err(|e| HarnessError::Stopping(e.into()))?;
    for &eps in &grid.eps {
        for &delta in &grid.delta {
            setup
                .stopping_config(eps, delta)
                .validate_for(&*probe, &setup.schedule)?;
        }
    }
    let mu = setup.model.true_mean();
    let n = setup.runs;
    let outcomes: Vec<StoppingOutcome> = (0..grid.cell_count() as u64 * n)
        .into_par_iter()
        .map(|k| setup.run_one(grid, (k / n) as usize, k % n))
        .collect::<Result<_, _>>()?;
    let cells = outcomes
        .chunks(n as usize)
        .enumerate()
        .map(|(cell, chunk)| {
            let (eps, delta) = grid.cell(cell);
            CellResult::from_outcomes(eps, delta, mu, setup.ell, chunk)
        })
        .collect();
    Ok(GridReport {
        meta: ReportMeta {
            model: setup.model.to_string(),
            schedule: setup.schedule.to_string(),
            variance: setup.variance,
            inflation: setup.inflation.clone(),
            t_max: setup.t_max,
            runs: n,
            ell: setup.ell,
            base_seed: setup.base_seed,
        },
        grid: grid.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Block {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        Block {
            mean: values.clone().sum::<f64>() / n,
            min: values.clone().fold(f64::INFINITY, f64::min),
            max: values.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Mean/min/max of reliability and complexity over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reliability: Block,
    pub complexity: Block,
    pub cells: usize,
    pub capped_runs: u64,
}

pub fn summarize(report: &GridReport) -> Summary {
    Summary {
        reliability: Block::of(report.cells.iter().map(|c| c.reliability)),
        complexity: Block::of(report.cells.iter().map(|c| c.complexity)),
        cells: report.cells.len(),
        capped_runs: report.cells.iter().map(|c| c.capped).sum(),
    }
}

impl Summary {
    /// Plain-text table with rows R and CM and columns Mean, Min, Max.
    pub fn table(&self) -> String {
        let mut s = format!("{:<4}{:>14}{:>14}{:>14}\n", "", "Mean", "Min", "Max");
        for (name, b) in [("R", self.reliability), ("CM", self.complexity)] {
            s.push_str(&format!(
                "{:<4}{:>14.6}{:>14.6}{:>14.6}\n",
                name, b.mean, b.min, b.max
            ));
        }
        s
    }
}

/// Lossless float formatting for CSV output.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub const CSV_HEADER: &str = "eps,delta,p,R,CM,mean_tau,capped";

pub fn write_csv<W: Write>(report: &GridReport, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for c in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_float(c.eps),
            fmt_float(c.delta),
            fmt_float(c.p),
            fmt_float(c.reliability),
            fmt_float(c.complexity),
            fmt_float(c.mean_tau),
            c.capped
        )?;
    }
    Ok(())
}

/// Summary document: the metadata plus the R and CM blocks.
pub fn summary_json(report: &GridReport) -> serde_json::Value {
    let s = summarize(report);
    serde_json::json!({
        "meta": report.meta,
        "grid": report.grid,
        "R": s.reliability,
        "CM": s.complexity,
        "cells": s.cells,
        "capped_runs": s.capped_runs,
    })
}
