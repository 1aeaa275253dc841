use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use training_planner::cli::{run, Command, RunOptions, OUT_ENV};
use training_planner::config::Format;

/// Education-economics calculations and min-max training plans.
#[derive(Debug, Parser)]
#[command(name = "training-planner", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON problem file.
    config: PathBuf,
    /// Output directory (overridden by $TRAINING_PLANNER_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for the solvers (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print nothing but errors.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let out_dir = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(args.out);
    let report = run(args.command, &args.config, &RunOptions { out_dir, format: args.format });
    if !args.quiet {
        for line in &report.summary {
            println!("{line}");
        }
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
    match &report.error {
        Some(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
        None => ExitCode::SUCCESS,
    }
}
