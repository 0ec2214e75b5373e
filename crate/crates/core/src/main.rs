use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jumpsplit::cli::{bounds_report, oracle_report, run_sweep, thread_cap, write_report, RunConfig};
use jumpsplit::Result;

#[derive(Parser)]
#[command(name = "jumpsplit", version, about = "Deep splitting solvers for semilinear PIDEs with jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver sweep and write summary.csv and runs.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the error-budget table as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print reference values as JSON, one object per dimension.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(n) = thread_cap()? {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
            let report = run_sweep(&cfg)?;
            write_report(&report, &out)?;
            for r in report.runs.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "run d={} method={} #{} failed: {}",
                    r.d,
                    r.method.as_str(),
                    r.run,
                    r.error.as_deref().unwrap_or("")
                );
            }
            emit(&report.csv())?;
            Ok(report.failures() == 0)
        }
        Command::Bounds { config } => {
            let cfg = RunConfig::load(&config)?;
            let rows = bounds_report(&cfg)?;
            emit(&(serde_json::to_string_pretty(&rows)? + "\n"))?;
            Ok(rows.iter().all(|r| !r.has_errors()))
        }
        Command::Oracle { config } => {
            let cfg = RunConfig::load(&config)?;
            for row in oracle_report(&cfg)? {
                emit(&(serde_json::to_string(&row)? + "\n"))?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
