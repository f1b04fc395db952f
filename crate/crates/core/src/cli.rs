//! Command-line front end: `run`, `sweep` and `verify`.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{parse_config, RawConfig};
use crate::error::{Error, Result};
use crate::harness::{run_experiment, sweep, sweep_points, BoundReport, RunOutput};
use crate::output::{emit_csv, sweep_csv};
use crate::suite::run_suite;

/// Exit status when every certificate holds.
pub const EXIT_OK: i32 = 0;
/// Exit status when at least one certificate fails.
pub const EXIT_CERTIFICATE: i32 = 1;
/// Exit status for usage, configuration and I/O errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "scmeta",
    version,
    about = "Parameter-free online learning for strongly convex losses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write rounds.csv, trace.csv and bounds.json.
    Run(ConfigArgs),
    /// Run the same experiment for T = 2^from ..= 2^to.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 8)]
        from: u32,
        #[arg(long, default_value_t = 14)]
        to: u32,
    },
    /// Certify every lemma on the shipped suite, or on one config if given.
    Verify(ConfigArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub raw: RawConfig,
}

impl ConfigArgs {
    fn is_empty(&self) -> bool {
        self.config.is_none() && self.raw == RawConfig::default()
    }
}

/// Names of the failed certificates, or `None` when the report is clean.
pub fn failures(report: &BoundReport) -> Option<String> {
    let failed: Vec<String> = report
        .failed()
        .map(|c| format!("{} (margin {:e})", c.name, c.margin))
        .collect();
    if failed.is_empty() {
        None
    } else {
        Some(failed.join(", "))
    }
}

fn summarize(label: &str, run: &RunOutput) -> bool {
    let r = &run.report;
    match failures(r) {
        None => {
            println!(
                "ok    {label}: regret {:.6} <= final bound {:.6}",
                r.observed_regret, r.final_bound
            );
            true
        }
        Some(names) => {
            println!("FAIL  {label}: {names}");
            false
        }
    }
}

/// [`EXIT_OK`] when every certificate passed, [`EXIT_CERTIFICATE`] otherwise.
pub fn status(report: &BoundReport) -> i32 {
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_CERTIFICATE
    }
}

fn cmd_run(args: &ConfigArgs) -> Result<i32> {
    let config = parse_config(args.config.as_deref(), args.raw.clone())?;
    let run = run_experiment(&config)?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    emit_csv(&run, &out)?;
    info!("wrote {}", out.display());
    Ok(if summarize("run", &run) {
        EXIT_OK
    } else {
        EXIT_CERTIFICATE
    })
}

fn cmd_sweep(args: &ConfigArgs, from: u32, to: u32) -> Result<i32> {
    if from > to || to >= usize::BITS - 1 {
        return Err(Error::config("to", "need from <= to and a representable 2^to"));
    }
    let config = parse_config(
        args.config.as_deref(),
        args.raw.clone().merge(RawConfig {
            horizon: Some(1 << from),
            ..RawConfig::default()
        }),
    )?;
    let horizons: Vec<usize> = (from..=to).map(|e| 1usize << e).collect();
    let runs = sweep(&config, &horizons)?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut ok = true;
    for run in &runs {
        emit_csv(run, &out.join(format!("T{}", run.config.horizon)))?;
        ok &= summarize(&format!("T={}", run.config.horizon), run);
    }
    fs::create_dir_all(&out)?;
    fs::write(out.join("sweep.csv"), sweep_csv(&sweep_points(&runs)))?;
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

fn cmd_verify(args: &ConfigArgs) -> Result<i32> {
    if !args.is_empty() {
        let config = parse_config(args.config.as_deref(), args.raw.clone())?;
        let run = run_experiment(&config)?;
        return Ok(if summarize("verify", &run) {
            EXIT_OK
        } else {
            EXIT_CERTIFICATE
        });
    }
    let mut ok = true;
    for (name, result) in run_suite() {
        let run = result.map_err(|e| Error::config("suite", format!("{name}: {e}")))?;
        ok &= summarize(&name, &run);
    }
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

/// Executes a parsed command and returns the process exit status.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { config, from, to } => cmd_sweep(config, *from, *to),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
