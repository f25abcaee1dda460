use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use mdstop_core::harness::HarnessError;
use mdstop_core::{build_grid, BatchSchedule, EvalGrid, EvalSetup, Inflation, ModelSpec, StoppingConfig, VarianceKind};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VarianceArg {
    Empirical,
    Conditional,
    Theoretical,
}

impl From<VarianceArg> for VarianceKind {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::Empirical => VarianceKind::Empirical,
            VarianceArg::Conditional => VarianceKind::Conditional,
            VarianceArg::Theoretical => VarianceKind::Theoretical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum InflationArg {
    #[value(name = "inv_t")]
    #[serde(rename = "inv_t")]
    InvT,
    #[value(name = "none")]
    #[serde(rename = "none")]
    None,
}

impl From<InflationArg> for Inflation {
    fn from(v: InflationArg) -> Self {
        match v {
            InflationArg::InvT => Inflation::InvT,
            InflationArg::None => Inflation::None,
        }
    }
}

/// Effective configuration: defaults, then a `--config` file, then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub model: ModelSpec,
    pub schedule: BatchSchedule,
    pub epsilon: f64,
    pub delta: f64,
    pub variance: VarianceArg,
    pub inflation: InflationArg,
    pub seed: u64,
    pub runs: u64,
    pub ell: u32,
    pub grid_eps: (f64, f64),
    pub grid_delta: (f64, f64),
    pub grid_points: usize,
    pub t_max: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            model: ModelSpec::default(),
            schedule: BatchSchedule::default(),
            epsilon: 0.05,
            delta: 0.05,
            variance: VarianceArg::Empirical,
            inflation: InflationArg::InvT,
            seed: 0,
            runs: 5000,
            ell: 5,
            grid_eps: (1e-3, 1e-1),
            grid_delta: (1e-3, 1e-1),
            grid_points: 10,
            t_max: StoppingConfig::DEFAULT_T_MAX,
            out: None,
            format: Format::Csv,
            threads: None,
        }
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let lo = a.trim().parse::<f64>().map_err(|e| format!("'{a}': {e}"))?;
    let hi = b.trim().parse::<f64>().map_err(|e| format!("'{b}': {e}"))?;
    Ok((lo, hi))
}

/// Flags shared by every command; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file; flags take precedence over its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the effective configuration as JSON and continue.
    #[arg(long, value_name = "FILE")]
    pub save_config: Option<PathBuf>,
    /// e.g. arch1, arch1:0.03:0.3:6, iid:normal:0:1, cv:usq_half, cv:usq_half:crude
    #[arg(long)]
    pub model: Option<ModelSpec>,
    /// poly:<exponent> or explicit:<m1>,<m2>,...
    #[arg(long)]
    pub schedule: Option<BatchSchedule>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
    #[arg(long, value_enum)]
    pub inflation: Option<InflationArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Runs per grid cell.
    #[arg(long)]
    pub runs: Option<u64>,
    /// Complexity exponent.
    #[arg(long)]
    pub ell: Option<u32>,
    /// Epsilon range LO:HI.
    #[arg(long, value_parser = parse_range, value_name = "LO:HI")]
    pub grid_eps: Option<(f64, f64)>,
    /// Delta range LO:HI.
    #[arg(long, value_parser = parse_range, value_name = "LO:HI")]
    pub grid_delta: Option<(f64, f64)>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Batch cap; also the trace horizon.
    #[arg(long)]
    pub t_max: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<CliConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load(path)?,
            None => CliConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        take!(model, schedule, epsilon, delta, variance, inflation, seed, runs, ell, grid_eps, grid_delta, grid_points, t_max, format);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(path) = &self.save_config {
            save(&cfg, path)?;
        }
        Ok(cfg)
    }
}

pub fn load(path: &Path) -> Result<CliConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn save(cfg: &CliConfig, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::Io(path.to_path_buf(), e))
}

impl CliConfig {
    pub fn stopping(&self) -> StoppingConfig {
        StoppingConfig::new(self.epsilon, self.delta)
            .with_variance(self.variance.into())
            .with_inflation(self.inflation.into())
            .with_t_max(self.t_max)
    }

    pub fn grid(&self) -> Result<EvalGrid, HarnessError> {
        build_grid(
            self.grid_eps.0,
            self.grid_eps.1,
            self.grid_delta.0,
            self.grid_delta.1,
            self.grid_points,
        )
    }

    pub fn eval_setup(&self) -> EvalSetup {
        EvalSetup {
            model: self.model.clone(),
            schedule: self.schedule.clone(),
            variance: self.variance.into(),
            inflation: self.inflation.into(),
            t_max: self.t_max,
            runs: self.runs,
            ell: self.ell,
            base_seed: self.seed,
        }
    }
}
