//! Experiment CLI: Monte Carlo verification of sparse-coding identifiability.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when solver
//! non-convergence exceeds the configured fraction of cells.

use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use sparsid_cli::config::ExperimentConfig;
use sparsid_cli::experiments::{
    run_delta_f, run_local_min_search, run_outlier_sweep, run_report,
    run_sample_complexity_sweep,
};
use sparsid_cli::output::{write_table, OutputFormat, TableRow};

#[derive(Parser)]
#[command(
    name = "sparsid",
    about = "Monte Carlo verification of sparse-coding dictionary identifiability",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key-value configuration file (see README for the schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format.
    #[arg(long, global = true, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Sphere positivity of the objective difference across radii.
    Deltaf,
    /// Alternating-minimization local search from a sphere initialization.
    Localmin,
    /// Outlier stress sweep across energy multipliers.
    Outliers,
    /// Sample-complexity sweep across batch sizes.
    Samplen,
    /// Condition/constant report for the configured instance.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| "--config <path> is required".to_string())?;
    let mut cfg = ExperimentConfig::from_file(path).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn open_sink(cli: &Cli) -> std::io::Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    })
}

fn emit<R: TableRow>(cli: &Cli, rows: &[R]) -> Result<(), String> {
    let mut sink = open_sink(cli).map_err(|e| e.to_string())?;
    write_table(rows, cli.format, &mut sink).map_err(|e| e.to_string())
}

fn failure_fraction(failures: usize, cells: usize) -> f64 {
    if cells == 0 {
        0.0
    } else {
        failures as f64 / cells as f64
    }
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    let cfg = load_config(cli)?;
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let mut failures = 0usize;
    let mut cells = 0usize;
    match cli.command {
        Command::Deltaf => {
            let rows = run_delta_f(&cfg).map_err(|e| e.to_string())?;
            for row in &rows {
                failures += row.solver_failures;
                cells += row.n_dirs;
            }
            emit(cli, &rows)?;
        }
        Command::Localmin => {
            let outcomes = run_local_min_search(&cfg).map_err(|e| e.to_string())?;
            let rows: Vec<_> = outcomes.into_iter().map(|o| o.row).collect();
            for row in &rows {
                failures += row.solver_failures;
                cells += row.iterations.max(1) * cfg.n;
            }
            emit(cli, &rows)?;
        }
        Command::Outliers => {
            let rows = run_outlier_sweep(&cfg).map_err(|e| e.to_string())?;
            for row in &rows {
                failures += row.solver_failures;
                cells += cfg.n_dirs + 1;
            }
            emit(cli, &rows)?;
        }
        Command::Samplen => {
            let rows = run_sample_complexity_sweep(&cfg).map_err(|e| e.to_string())?;
            for row in &rows {
                failures += row.solver_failures;
                cells += cfg.n_dirs * row.seeds;
            }
            emit(cli, &rows)?;
        }
        Command::Report => {
            let bundle = run_report(&cfg).map_err(|e| e.to_string())?;
            let mut sink = open_sink(cli).map_err(|e| e.to_string())?;
            serde_json::to_writer_pretty(&mut sink, &bundle).map_err(|e| e.to_string())?;
            writeln!(sink).map_err(|e| e.to_string())?;
        }
    }
    if failure_fraction(failures, cells) > cfg.max_failure_fraction {
        eprintln!(
            "solver non-convergence in {failures}/{cells} cells exceeds the allowed fraction {}",
            cfg.max_failure_fraction
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
