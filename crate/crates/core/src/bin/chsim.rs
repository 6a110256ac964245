use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chsim::report::{exit, Report};
use chsim::scenario::{self, RunOptions};

#[derive(Parser)]
#[command(
    name = "chsim",
    version,
    about = "Run consistent-histories scenario files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Emit canonical JSON instead of aligned text.
    #[arg(long, global = true)]
    json: bool,
    /// Pass/fail threshold for report checks.
    #[arg(long, global = true, default_value_t = chsim::tol::IDENTITY)]
    tolerance: f64,
    /// Seed for generated-corpus scenarios.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Largest Hilbert-space dimension any operator may reach.
    #[arg(long, global = true, default_value_t = chsim::linalg::DEFAULT_MAX_DIM)]
    max_dim: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run many scenarios; directories expand to their *.json files.
    Batch {
        /// Defaults to $CHSIM_FIXTURES.
        paths: Vec<PathBuf>,
        /// Worker threads.
        #[arg(long, short = 'j', default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Calibration table of a measurement scenario's apparatus.
    Calibrate {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Common refinement of a joint-measurement scenario's observables.
    Refine {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decoherence matrix of a histories scenario.
    Consistency {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Valuation search for a valuation scenario.
    Valuation {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn options(c: &Common) -> Result<RunOptions, String> {
    if !(c.tolerance.is_finite() && c.tolerance >= 0.0) {
        return Err(format!(
            "--tolerance must be a nonnegative number, got {}",
            c.tolerance
        ));
    }
    Ok(RunOptions {
        tolerance: c.tolerance,
        seed: c.seed,
        max_dim: c.max_dim,
    })
}

fn emit(report: &Report, json: bool) -> ExitCode {
    if json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    ExitCode::from(report.exit_code() as u8)
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("chsim: {msg}");
    ExitCode::from(exit::VALIDATION as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::VALIDATION
            } else {
                exit::PASS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };

    let common = match &cli.command {
        Command::Run { common, .. }
        | Command::Calibrate { common, .. }
        | Command::Refine { common, .. }
        | Command::Consistency { common, .. }
        | Command::Valuation { common, .. }
        | Command::Batch { common, .. } => common,
    };
    let opts = match options(common) {
        Ok(o) => o,
        Err(msg) => return usage_error(&msg),
    };

    match &cli.command {
        Command::Run { path, .. } => emit(&scenario::run_scenario(path, &opts), common.json),
        Command::Calibrate { path, .. } => emit(&scenario::calibrate(path, &opts), common.json),
        Command::Refine { path, .. } => emit(&scenario::refine(path, &opts), common.json),
        Command::Consistency { path, .. } => emit(&scenario::consistency(path, &opts), common.json),
        Command::Valuation { path, .. } => emit(&scenario::valuation(path, &opts), common.json),
        Command::Batch { paths, jobs, .. } => {
            let inputs = if paths.is_empty() {
                match std::env::var_os("CHSIM_FIXTURES") {
                    Some(dir) => vec![PathBuf::from(dir)],
                    None => {
                        return usage_error("no scenario paths given and CHSIM_FIXTURES is unset")
                    }
                }
            } else {
                paths.clone()
            };
            let files = match scenario::collect_paths(&inputs) {
                Ok(f) if !f.is_empty() => f,
                Ok(_) => return usage_error("no scenario files found"),
                Err(e) => return usage_error(&format!("cannot list scenarios: {e}")),
            };
            match scenario::batch(&files, *jobs, &opts) {
                Ok(b) => {
                    if common.json {
                        print!("{}", b.to_json());
                    } else {
                        print!("{}", b.to_text());
                    }
                    ExitCode::from(b.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("chsim: {e}");
                    ExitCode::from(Report::from_error("batch", &e).exit_code() as u8)
                }
            }
        }
    }
}
