use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sptq::cli::{render_csv, run, write_atomic, Experiment, ExperimentConfig, RunError, RunResult};

/// Entanglement-spectrum quench experiments.
#[derive(Parser, Debug)]
#[command(name = "sptq", version)]
struct Args {
    /// Experiment to run; must match the config file's `experiment` when both are given.
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON config (one experiment per file).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "SPTQ_THREADS")]
    threads: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `--set parameters.l=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(args: Args) -> RunResult<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            if cfg.experiment != args.experiment {
                return Err(RunError::Config(format!("config is for `{}`", cfg.experiment.name())));
            }
            cfg
        }
        None => ExperimentConfig::defaults(args.experiment),
    };
    for o in &args.overrides {
        config.set(o)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_path = Some(out);
    }
    if let Some(n) = args.threads.or(config.threads) {
        config.threads = Some(n);
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Config(e.to_string()))?;
    }

    let output = run(&config)?;
    let csv = render_csv(&output.table, &config);
    match &config.output_path {
        Some(path) => {
            write_atomic(path, &csv).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            if let Some(report) = &output.report {
                let json = serde_json::to_string_pretty(report).expect("report serializes");
                write_atomic(&path.with_extension("json"), &json).map_err(|e| RunError::Config(e.to_string()))?;
            }
        }
        None => print!("{csv}"),
    }
    if let Some(report) = &output.report {
        for e in &report.entries {
            eprintln!("{} {} (measured {:?}, expected {:?}, tol {:?})", if e.passed { "PASS" } else { "FAIL" }, e.name, e.measured, e.expected, e.tolerance);
        }
        if report.failures() > 0 {
            return Err(RunError::Validation(report.failures(), report.entries.len()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sptq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
