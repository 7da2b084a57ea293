use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mbdl_bench::{compare_report, emit_plots, run_experiment, BenchError, ExperimentConfig, OUTPUT_ROOT_VAR};

#[derive(Debug, Parser)]
#[command(name = "mbdl", version, about = "Runs model-based deep learning experiments and summarizes their metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every grid point and seed of a config
    Run {
        config: PathBuf,
        /// Root for relative output directories (default: $MBDL_OUTPUT_ROOT, then ./results)
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Write a gnuplot script and data files for the metric CSVs under DIR
    Plots { dir: PathBuf },
    /// Print method-vs-baseline ratios, parameter counts and acceptance checks
    Report {
        dir: PathBuf,
        /// METHOD=BASELINE pair; repeatable. Defaults to the built-in pairs.
        #[arg(long = "baseline", value_parser = parse_pair)]
        baselines: Vec<(String, String)>,
    },
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_owned(), b.to_owned())),
        _ => Err(format!("expected METHOD=BASELINE, got `{s}`")),
    }
}

fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn exit_code(e: &BenchError) -> u8 {
    match e {
        BenchError::Config(_) | BenchError::Parse(_) | BenchError::NoMetrics(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_root: root } => ExperimentConfig::load(&config)
            .and_then(|cfg| run_experiment(&cfg, &output_root(root)))
            .map(|s| {
                println!("{} tasks, {} metric rows -> {}", s.tasks, s.rows, s.metrics.display());
            }),
        Command::Plots { dir } => emit_plots(&dir).map(|s| {
            println!("{} figures, {} curves -> {}", s.figures, s.curves, s.script.display());
        }),
        Command::Report { dir, baselines } => compare_report(&dir, &baselines).map(|r| print!("{r}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
