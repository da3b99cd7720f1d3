//! Command-line front end for the experiments.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{Level, LogRecord, Logger, SinkSpec};
use crate::error::{Error, Result};
use crate::harness::aa_demo::{aa_table_csv, run_aa_demo};
use crate::harness::experiments::*;
use crate::harness::gray_scott::GrayScott;
use crate::harness::lotka_volterra::{lv_slopes, lv_table_csv, run_lotka_volterra, LvReference, LV_STEP_SIZES, LV_T_END};
use crate::harness::report::Table;
use crate::splitting::default_methods;

#[derive(Debug, Parser)]
#[command(name = "chronos", version, about = "Time-integration experiments; results are written as CSV")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Grid points per side (Gray–Scott runs).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Final time.
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    /// Output CSV path; defaults to `<subcommand>.csv`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Most verbose level to print: error, warning, info, or debug.
    /// Overrides CHRONOS_LOG_LEVEL.
    #[arg(long, global = true)]
    pub log_level: Option<Level>,
    /// Seed for randomized problems (aa-demo).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Splitting convergence on Gray–Scott with step sizes 2^-i.
    GrayScottSplitting {
        /// Number of step sizes, i = 0..count.
        #[arg(long, default_value_t = 8)]
        step_count: usize,
    },
    /// RKC against the 3-stage ERK pair on Gray–Scott.
    GrayScottLsrk {
        /// Relative tolerances.
        #[arg(long, value_delimiter = ',', default_values_t = GS_LSRK_TOLERANCES)]
        tolerances: Vec<f64>,
        #[arg(long, default_value_t = GS_LSRK_ABSTOL)]
        abstol: f64,
        /// Factor applied to the Gershgorin spectral-radius bound.
        #[arg(long, default_value_t = 1.0)]
        rho_scale: f64,
    },
    /// Forward and adjoint convergence on Lotka–Volterra.
    LotkaVolterra {
        #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5])]
        orders: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = LV_STEP_SIZES)]
        steps: Vec<f64>,
    },
    /// Energy behaviour of the symplectic methods on the harmonic oscillator.
    SprkDemo {
        #[arg(long, default_value_t = SPRK_DEMO_STEP)]
        step: f64,
    },
    /// Plain and accelerated fixed-point iteration on a random affine map.
    AaDemo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GrayScottSplitting { .. } => "gray-scott-splitting",
            Command::GrayScottLsrk { .. } => "gray-scott-lsrk",
            Command::LotkaVolterra { .. } => "lotka-volterra",
            Command::SprkDemo { .. } => "sprk-demo",
            Command::AaDemo => "aa-demo",
        }
    }
}

/// Environment configuration first, then `--log-level`. Enabled levels
/// without a sink print to standard error.
pub fn build_logger(level: Option<Level>) -> Result<Logger> {
    let (mut logger, status) = Logger::from_environment();
    if !status.is_success() {
        eprintln!("warning: {}", status.message);
    }
    if level.is_some() {
        logger.set_max_level(level);
    }
    for l in Level::ALL {
        if logger.max_level().is_some_and(|m| l <= m) && !logger.has_sink(l) {
            logger.set_sink(l, &SinkSpec::Stderr)?;
        }
    }
    Ok(logger)
}

/// What a run wrote, plus human-readable summary lines.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub path: PathBuf,
    pub rows: usize,
    pub notes: Vec<String>,
}

pub fn run(cli: &Cli, logger: &Arc<Logger>) -> Result<RunSummary> {
    let c = &cli.common;
    let name = cli.command.name();
    let path = c.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    logger.log(&LogRecord::new(Level::Info, "chronos", "experiment-start").with("name", name));
    let mut notes = Vec::new();
    let table: Table = match &cli.command {
        Command::GrayScottSplitting { step_count } => {
            let gs = GrayScott::new(c.grid.unwrap_or(GS_SPLITTING_GRID))?;
            let t_end = positive(c.t_end.unwrap_or(GS_SPLITTING_T_END), "--t-end")?;
            let reference = gray_scott_reference(&gs, t_end, GS_REFERENCE_TOL, GS_REFERENCE_TOL)?;
            let methods = default_methods(3)?;
            let rows = run_gray_scott_splitting(&gs, t_end, &dyadic_steps(*step_count), &methods, &reference)?;
            for m in &methods {
                notes.push(format!("{}: slope {}", m.name(), fmt_slope(splitting_slope(&rows, m.name()))));
            }
            splitting_table_csv(&rows)
        }
        Command::GrayScottLsrk { tolerances, abstol, rho_scale } => {
            let gs = GrayScott::new(c.grid.unwrap_or(GS_LSRK_GRID))?;
            let t_end = positive(c.t_end.unwrap_or(GS_LSRK_T_END), "--t-end")?;
            let tightest = tolerances.iter().cloned().fold(f64::INFINITY, f64::min);
            let reference = gray_scott_reference(&gs, t_end, (1e-3 * tightest).min(1e-10), *abstol)?;
            let rows = run_gray_scott_lsrk(&gs, t_end, tolerances, *abstol, *rho_scale, &reference)?;
            for r in &rows {
                notes.push(format!(
                    "{} reltol {:e}: error {:.3e}, {} steps, max stages {}, {:.3} s",
                    r.method, r.reltol, r.error, r.steps, r.max_stages, r.seconds
                ));
            }
            lsrk_table_csv(&rows)
        }
        Command::LotkaVolterra { orders, steps } => {
            if c.t_end.is_some_and(|t| t != LV_T_END) {
                return Err(Error::invalid(format!("lotka-volterra runs on the fixed interval [0, {LV_T_END}]")));
            }
            let reference = LvReference::compute()?;
            let rows = run_lotka_volterra(orders, steps, &reference)?;
            for &o in orders {
                let s = lv_slopes(&rows, o, &reference);
                notes.push(format!(
                    "order {o}: slopes y {}, dg/dy0 {}, dg/dp {}",
                    fmt_slope(s[0]),
                    fmt_slope(s[1]),
                    fmt_slope(s[2])
                ));
            }
            lv_table_csv(&rows)
        }
        Command::SprkDemo { step } => {
            let rows = run_sprk_demo(*step, c.t_end.unwrap_or(SPRK_DEMO_T_END))?;
            for r in &rows {
                notes.push(format!(
                    "order {} {:?}: max energy error {:.3e}, modified-energy drift {:.3e}",
                    r.order, r.form, r.max_energy_error, r.modified_energy_drift
                ));
            }
            sprk_table_csv(&rows)
        }
        Command::AaDemo => {
            let rows = run_aa_demo(c.seed)?;
            let mut configs: Vec<&str> = rows.iter().map(|r| r.config.as_str()).collect();
            configs.dedup();
            for cfg in configs {
                let its = rows.iter().filter(|r| r.config == cfg).count().saturating_sub(1);
                notes.push(format!("{cfg}: {its} iterations"));
            }
            aa_table_csv(&rows)
        }
    };
    table.write(&path)?;
    logger.log(
        &LogRecord::new(Level::Info, "chronos", "experiment-end")
            .with("rows", table.rows.len() as f64)
            .with("path", path.display().to_string()),
    );
    Ok(RunSummary { path, rows: table.rows.len(), notes })
}

fn positive(v: f64, flag: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{flag} must be positive, got {v}")))
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or("n/a".into(), |s| format!("{s:.2}"))
}
