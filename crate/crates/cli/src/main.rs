//! `mdstop`: run, trace and evaluate sequential stopping rules.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 a verification
//! check failed.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use mdstop_core::harness::{fmt_float, summary_json, write_csv, HarnessError};
use mdstop_core::stopping::{batch_criterion, StoppingError, StreamPair};
use mdstop_core::{evaluate, run_stopping, summarize, BatchRunner, Purpose, RngStream, StreamId};

use config::{CliConfig, Format, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, io::Error),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0} verification check(s) failed")]
    Verify(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mdstop", version, about = "Sequential stopping rules for Monte Carlo means")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One stopped run; prints a JSON record.
    Run(Overrides),
    /// Per-batch series up to --t-max batches.
    Trace(Overrides),
    /// Reliability and complexity over an (eps, delta) grid.
    Evaluate(Overrides),
    /// Numerical oracle checks.
    Verify(Overrides),
}

fn emit(cfg: &CliConfig, body: &[u8]) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => fs::write(path, body).map_err(|e| CliError::Io(path.clone(), e)),
        None => io::stdout()
            .write_all(body)
            .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
    }
}

fn to_json_line<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string(value).expect("output serializes");
    s.push('\n');
    s.into_bytes()
}

fn cmd_run(cfg: &CliConfig) -> Result<(), CliError> {
    let mut model = cfg.model.build().map_err(StoppingError::from)?;
    let mut streams = StreamPair::new(StreamId::new(cfg.seed, Purpose::Run));
    let out = run_stopping(&mut *model, &cfg.schedule, &cfg.stopping(), &mut streams)?;
    emit(cfg, &to_json_line(&out))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn cmd_trace(cfg: &CliConfig) -> Result<(), CliError> {
    let stop = cfg.stopping();
    let mut model = cfg.model.build().map_err(StoppingError::from)?;
    stop.validate_for(&*model, &cfg.schedule)?;
    let mut stream = RngStream::new(StreamId::new(cfg.seed, Purpose::Trace));
    let mut runner = BatchRunner::new(&mut *model, &cfg.schedule, &mut stream);
    let mut rows = Vec::new();
    for _ in 0..cfg.t_max {
        let stats = runner.next_batch()?;
        let crit = match batch_criterion(&stop, &stats) {
            Ok(c) => c,
            Err(StoppingError::ZeroScale(_)) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push((stats, crit));
    }
    let body = match cfg.format {
        Format::Csv => {
            let mut s = String::from("t,size,mu,v0sq,v1sq,v2sq,criterion\n");
            for (b, c) in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    b.t,
                    b.size,
                    fmt_float(b.mean),
                    opt(b.v0sq),
                    opt(b.v1sq),
                    opt(b.v2sq),
                    opt(*c)
                ));
            }
            s.into_bytes()
        }
        Format::Json => {
            let doc: Vec<_> = rows
                .iter()
                .map(|(b, c)| {
                    serde_json::json!({
                        "t": b.t, "size": b.size, "mu": b.mean,
                        "v0sq": b.v0sq, "v1sq": b.v1sq, "v2sq": b.v2sq, "criterion": c,
                    })
                })
                .collect();
            to_json_line(&doc)
        }
    };
    emit(cfg, &body)
}

/// `results.csv` -> `results.summary.json`.
fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn cmd_evaluate(cfg: &CliConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let report = evaluate(&cfg.eval_setup(), &grid)?;
    let summary = summary_json(&report);
    match cfg.format {
        Format::Csv => {
            let mut csv = Vec::new();
            write_csv(&report, &mut csv).expect("writing to memory");
            emit(cfg, &csv)?;
            match &cfg.out {
                Some(out) => {
                    let path = summary_path(out);
                    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
                    fs::write(&path, text).map_err(|e| CliError::Io(path, e))?;
                }
                None => eprint!("{}", summarize(&report).table()),
            }
            Ok(())
        }
        Format::Json => {
            let doc = serde_json::json!({ "summary": summary, "cells": report.cells });
            emit(cfg, &to_json_line(&doc))
        }
    }
}

fn cmd_verify(cfg: &CliConfig) -> Result<(), CliError> {
    let checks = mdstop_core::verify::run_all(cfg.seed);
    let failed = checks.iter().filter(|c| !c.passed).count();
    let body = match cfg.format {
        Format::Json => to_json_line(&checks),
        Format::Csv => {
            let mut s = String::new();
            for c in &checks {
                s.push_str(&format!(
                    "{} {}: {} (expected {})\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.expected
                ));
            }
            s.into_bytes()
        }
    };
    emit(cfg, &body)?;
    if failed > 0 {
        return Err(CliError::Verify(failed));
    }
    Ok(())
}

type Handler = fn(&CliConfig) -> Result<(), CliError>;

fn execute(command: &Command) -> Result<(), CliError> {
    let (overrides, run): (&Overrides, Handler) = match command {
        Command::Run(o) => (o, cmd_run),
        Command::Trace(o) => (o, cmd_trace),
        Command::Evaluate(o) => (o, cmd_evaluate),
        Command::Verify(o) => (o, cmd_verify),
    };
    let cfg = overrides.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(&cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
