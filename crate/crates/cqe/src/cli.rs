//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{backtest_config, read_document, simulate_config};
use crate::error::{CliError, CliResult};
use crate::{backtest, report, simulate};

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "CQE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "cqe", version, about = "Conformalised quantile estimation studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation study.
    Simulate(RunArgs),
    /// Run a Growth-at-Risk backtest on a CSV dataset.
    Backtest(RunArgs),
    /// Merge the artifacts of completed runs into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Config override, `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    /// Also write the first simulated series to `series.csv`.
    #[arg(long)]
    pub export_series: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding run artifacts (itself or its subdirectories).
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn out_dir(out: &Option<PathBuf>) -> CliResult<&Path> {
    out.as_deref()
        .ok_or_else(|| CliError::config("--out", format!("no output directory (use --out or {OUT_DIR_ENV})")))
}

pub fn cmd_simulate(args: &RunArgs) -> CliResult<Vec<PathBuf>> {
    let doc = read_document(args.config.as_deref(), &args.set, "simulate")?;
    let cfg = simulate_config(&doc, args.seed)?;
    let out = out_dir(&args.out)?;
    let result = simulate::run_parallel(&cfg, args.threads)?;
    if result.partial {
        let cells: usize = result.models.iter().map(|m| m.errors.len()).sum();
        log::warn!("{cells} (iteration, level) cells failed and are reported as NA");
    }
    if result.degenerate {
        log::warn!("degenerate run: {}", result.notes.join("; "));
    }
    let mut written = simulate::write_outputs(out, &cfg, &result)?;
    if args.export_series {
        written.push(simulate::export_series(&out.join("series.csv"), &cfg, 0)?);
    }
    Ok(written)
}

pub fn cmd_backtest(args: &RunArgs) -> CliResult<Vec<PathBuf>> {
    let doc = read_document(args.config.as_deref(), &args.set, "backtest")?;
    let base = args.config.as_deref().and_then(Path::parent);
    let settings = backtest_config(&doc, args.seed, base)?;
    let out = out_dir(&args.out)?;
    let (ds, load_report) = backtest::load(&settings)?;
    let results = backtest::run_all(&ds, &settings, args.threads)?;
    for r in &results {
        for m in &r.models {
            if m.failed_origins > 0 {
                log::warn!(
                    "{} {} h={}: {} origins failed (NA)",
                    m.model.label(),
                    r.mode.key(),
                    r.horizon,
                    m.failed_origins
                );
            }
        }
    }
    backtest::write_outputs(out, &settings, &load_report, &results)
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| CliError::config("--out", format!("no run directory (use --out or {OUT_DIR_ENV})")))?;
    let rep = report::build_report(out)?;
    report::write_report(out, &rep)?;
    Ok(report::render_text(&rep))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => {
            for p in cmd_simulate(a)? {
                println!("{}", p.display());
            }
        }
        Command::Backtest(a) => {
            for p in cmd_backtest(a)? {
                println!("{}", p.display());
            }
        }
        Command::Report(a) => print!("{}", cmd_report(a)?),
    }
    Ok(())
}
