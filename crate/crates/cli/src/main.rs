// SPDX-License-Identifier: Apache-2.0

//! `coinlever` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 scenario error
//! (any partial output is still written).

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coinlever::dataset::Datasets;
use coinlever::io::{emit_report, load_payments, load_utxos, read_report, IoError, ReportFormat};
use coinlever::model::UtxoPool;
use coinlever::orchestrator::{run, step, WorldState};
use coinlever::simulation::{default_grid, sweep, Mode, ScenarioConfig, SweepReport};
use serde::Serialize;

use crate::config::{Overrides, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "coinlever", version, about = "Coin selection with leverage")]
struct Cli {
    /// Progress messages on stderr
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one iteration on the given pool and payment queue
    Select(RunArgs),
    /// Process the whole payment queue
    RunFull(RunArgs),
    /// Run paired simulations and write a report
    Simulate(SimulateArgs),
    /// Convert a JSON report to CSV or markdown
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Leverage,
    NoLeverage,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Leverage => Mode::Leverage,
            ModeArg::NoLeverage => Mode::NoLeverage,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Md,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Md => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// UTXO CSV (id,value_sat)
    #[arg(long, value_name = "PATH")]
    utxos: PathBuf,
    /// Payment CSV (id,value_sat[,urgency_rank])
    #[arg(long, value_name = "PATH")]
    payments: PathBuf,
    #[arg(long, value_enum, default_value = "leverage")]
    mode: ModeArg,
    /// Output JSON file; stdout when absent
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Run the 20-cell default grid instead of a single cell
    #[arg(long, conflicts_with_all = ["gamma", "m", "beta"])]
    grid: bool,
    /// UTXO CSV to sample from instead of the bundled dataset
    #[arg(long, value_name = "PATH", requires = "payments")]
    utxos: Option<PathBuf>,
    /// Payment CSV to sample from instead of the bundled dataset
    #[arg(long, value_name = "PATH", requires = "utxos")]
    payments: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Output file, or directory for CSV
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report written by `simulate`
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: FormatArg,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Scenario(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Scenario(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Scenario(m) => m,
        }
    }
}

fn data_error(path: &Path) -> impl Fn(IoError) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Data(e.to_string())),
    }
}

fn resolve(overrides: &Overrides) -> Result<ScenarioConfig, Failure> {
    overrides.resolve(std::env::var(SEED_ENV).ok()).map_err(Failure::Usage)
}

fn load_state(args: &RunArgs) -> Result<WorldState, Failure> {
    let utxos = load_utxos(&args.utxos).map_err(data_error(&args.utxos))?;
    let payments = load_payments(&args.payments).map_err(data_error(&args.payments))?;
    Ok(WorldState::new(UtxoPool::new(utxos), payments))
}

fn select(args: &RunArgs) -> Result<(), Failure> {
    let config = resolve(&args.overrides)?;
    let state = load_state(args)?;
    let procedure = config.procedure(args.mode.into()).map_err(|e| Failure::Usage(e.to_string()))?;
    match step(&state, &procedure, &config.fees(), config.limits()) {
        Ok(record) => write_json(&record, args.out.as_deref()),
        Err(e) => Err(Failure::Scenario(e.to_string())),
    }
}

fn run_full(args: &RunArgs, verbose: bool) -> Result<(), Failure> {
    let config = resolve(&args.overrides)?;
    let state = load_state(args)?;
    let procedure = config.procedure(args.mode.into()).map_err(|e| Failure::Usage(e.to_string()))?;
    match run(state, &procedure, &config.fees(), config.limits(), None) {
        Ok(result) => {
            if verbose {
                eprintln!(
                    "{} iterations, {} payments, cost {}",
                    result.records.len(),
                    result.processed,
                    result.total_cost
                );
            }
            write_json(&result, args.out.as_deref())
        }
        Err(e) => {
            if let Some(partial) = e.partial() {
                write_json(partial, args.out.as_deref())?;
            }
            Err(Failure::Scenario(e.to_string()))
        }
    }
}

fn simulate(args: &SimulateArgs, verbose: bool) -> Result<(), Failure> {
    let config = resolve(&args.overrides)?;
    let data = match (&args.utxos, &args.payments) {
        (Some(u), Some(p)) => Datasets {
            utxos: load_utxos(u).map_err(data_error(u))?,
            payments: load_payments(p).map_err(data_error(p))?,
        },
        _ => Datasets::bundled(),
    };
    let configs = if args.grid { default_grid(&config) } else { vec![config] };
    let report = SweepReport::from_results(sweep(&configs, &data));
    emit_report(&report, args.format.into(), &args.out).map_err(data_error(&args.out))?;

    let failed_reps: u64 =
        report.cells.iter().map(|c| c.no_leverage.failed_repetitions + c.leverage.failed_repetitions).sum();
    if verbose {
        eprintln!("{} cells written to {}", report.cells.len(), args.out.display());
    }
    for f in &report.failures {
        eprintln!("gamma {} m {}: {}", f.gamma, f.m, f.error);
    }
    if !report.failures.is_empty() || failed_reps > 0 {
        return Err(Failure::Scenario(format!(
            "{} failed cells, {failed_reps} failed repetitions",
            report.failures.len()
        )));
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let report = read_report(&args.input).map_err(data_error(&args.input))?;
    emit_report(&report, args.format.into(), &args.out).map_err(data_error(&args.out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Select(args) => select(args),
        Command::RunFull(args) => run_full(args, cli.verbose),
        Command::Simulate(args) => simulate(args, cli.verbose),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("coinlever: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
