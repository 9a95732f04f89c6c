//! Experiment driver for the vehicular-caching simulator.
//!
//! `run` resolves a sweep grid from a JSON experiment file, executes the
//! episodes in parallel, and writes `metrics.csv`, `summary.csv`, per-row
//! traces, and a `manifest.json` that reproduces the run. `verify` executes
//! named oracle/trend checks from an expectations file. `sweep-list` prints
//! the resolved grid without running anything.

mod experiment;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use experiment::{load_config, resolve_grid, SpecError};

#[derive(Parser)]
#[command(name = "vecache", version, about = "Vehicular edge-caching simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (or a manifest.json from a previous run).
    config: PathBuf,
    /// Replace the replicate seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the experiment file).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for the sweep (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write per-slot trace files per grid row.
    #[arg(long)]
    emit_traces: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment and write result artifacts.
    Run(RunArgs),
    /// Run the named checks from an expectations file against the config's
    /// base scenario.
    Verify {
        config: PathBuf,
        expectations: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the resolved sweep grid (one line per run).
    SweepList { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Verify { config, expectations, threads } => verify_command(config, expectations, threads),
        Command::SweepList { config } => sweep_list_command(config),
    }
}

fn spec_exit(err: &SpecError) -> ExitCode {
    eprintln!("{err}");
    ExitCode::from(2)
}

fn install_pool(threads: Option<usize>) -> Option<rayon::ThreadPool> {
    threads.map(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
    })
}

fn run_command(args: RunArgs) -> ExitCode {
    let mut spec = match load_config(&args.config) {
        Ok(spec) => spec,
        Err(err) => return spec_exit(&err),
    };
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(dir) = args.out_dir {
        spec.output_dir = dir;
    }
    if args.emit_traces {
        spec.emit_traces = true;
    }
    let rows = match resolve_grid(&spec) {
        Ok(rows) => rows,
        Err(err) => return spec_exit(&err),
    };
    if let Err(err) = std::fs::create_dir_all(&spec.output_dir) {
        eprintln!("cannot create {}: {err}", spec.output_dir.display());
        return ExitCode::from(2);
    }

    let configs: Vec<_> = rows.iter().map(|r| r.config.clone()).collect();
    let results = match install_pool(args.threads) {
        Some(pool) => pool.install(|| vecache::sweep(&configs)),
        None => vecache::sweep(&configs),
    };

    let out = &spec.output_dir;
    let emit = (|| -> anyhow::Result<()> {
        output::write_metrics_csv(&out.join("metrics.csv"), &spec, &rows, &results)?;
        output::write_summary_csv(&out.join("summary.csv"), &spec, &rows, &results)?;
        output::write_manifest(&out.join("manifest.json"), &spec, &rows)?;
        if spec.emit_traces {
            output::write_traces(out, &rows, &results)?;
        }
        Ok(())
    })();
    if let Err(err) = emit {
        eprintln!("failed to write results: {err}");
        return ExitCode::from(2);
    }

    let failures = results.iter().filter(|r| r.is_err()).count();
    println!(
        "{} rows, {} ok, {} failed -> {}",
        rows.len(),
        rows.len() - failures,
        failures,
        out.display()
    );
    if failures > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn verify_command(config: PathBuf, expectations: PathBuf, threads: Option<usize>) -> ExitCode {
    let spec = match load_config(&config) {
        Ok(spec) => spec,
        Err(err) => return spec_exit(&err),
    };
    let checks = match verify::load_expectations(&expectations) {
        Ok(checks) => checks,
        Err(err) => {
            eprintln!("{err:#}");
            return ExitCode::from(2);
        }
    };
    let run = || verify::run_checks(&spec.scenario, &checks);
    let reports = match install_pool(threads) {
        Some(pool) => pool.install(run),
        None => run(),
    };
    let reports = match reports {
        Ok(reports) => reports,
        Err(err) => {
            eprintln!("{err:#}");
            return ExitCode::from(2);
        }
    };
    let mut failures = 0;
    for report in &reports {
        let tag = if report.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", report.name, report.detail);
        if !report.passed {
            failures += 1;
        }
    }
    println!("{} checks, {} failed", reports.len(), failures);
    if failures > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn sweep_list_command(config: PathBuf) -> ExitCode {
    let spec = match load_config(&config) {
        Ok(spec) => spec,
        Err(err) => return spec_exit(&err),
    };
    let rows = match resolve_grid(&spec) {
        Ok(rows) => rows,
        Err(err) => return spec_exit(&err),
    };
    for row in &rows {
        let axes: Vec<String> = row
            .axis_values
            .iter()
            .map(|(p, v)| format!("{p}={v}"))
            .collect();
        println!(
            "row {:>4}  policy={:<7} seed={:<12} {}",
            row.index,
            row.config.policy.to_string(),
            row.seed,
            axes.join(" ")
        );
    }
    println!("{} rows", rows.len());
    ExitCode::SUCCESS
}
