use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use verso::bench::{run_bench, BenchConfig};
use verso::history_file::HistoryFile;
use verso::lincheck::{run_lincheck, LincheckConfig};
use verso::stress::{run_stress, StressConfig};
use verso::{Algo, HarnessError};
use verso_core::verify::check_linearizable;

/// Exit status: 0 when every check passed, 2 on any breach, 64 on usage
/// errors, 74 when a file could not be read or written.
#[derive(Parser, Debug)]
#[command(name = "verso", version, about = "Version maintenance benchmark and checkers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_enum, default_value_t = Algo::Waitfree)]
    algo: Algo,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writer plus readers over a persistent tree, checked for strict
    /// serializability and leaks.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, short = 'p', default_value_t = 8)]
        threads: usize,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        /// Inserts per write transaction.
        #[arg(long, default_value_t = 10)]
        nu: usize,
        /// Range queries per read transaction.
        #[arg(long, default_value_t = 10)]
        nq: usize,
        /// Initial tree size; keys are drawn from twice this range.
        #[arg(long, short = 'n', default_value_t = 100_000)]
        keys: usize,
        /// Leave superseded versions uncollected.
        #[arg(long)]
        no_collect: bool,
        /// Run this many deterministic rounds on one thread instead.
        #[arg(long)]
        rounds: Option<u64>,
        /// Write the live-version time series here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Bare object under a rotating writer, checking reclamation exactly.
    Stress {
        #[command(flatten)]
        common: Common,
        #[arg(long, short = 'p', default_value_t = 8)]
        threads: usize,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, short = 'n', default_value_t = 1000)]
        keys: usize,
        /// Yield before about one in this many shared accesses (0: never).
        #[arg(long, default_value_t = 64)]
        yield_one_in: u64,
    },
    /// Randomized linearizability trials.
    Lincheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 3)]
        threads: usize,
        #[arg(long, default_value_t = 12)]
        ops: usize,
        #[arg(long, default_value_t = 3)]
        yield_one_in: u64,
        /// Directory for failing histories.
        #[arg(long)]
        fail_dir: Option<PathBuf>,
    },
    /// Checks a recorded history file for linearizability.
    CheckHistory {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct HistoryVerdict {
    command: &'static str,
    file: String,
    operations: usize,
    linearizable: bool,
    linearization_or_prefix: String,
}

fn emit(report: &impl Serialize, out: Option<&PathBuf>) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::from)?;
    println!("{json}");
    if let Some(path) = out {
        std::fs::write(path, json + "\n")?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::Bench {
            common,
            threads,
            seconds,
            nu,
            nq,
            keys,
            no_collect,
            rounds,
            csv,
        } => {
            let r = run_bench(&BenchConfig {
                algo: common.algo,
                threads,
                seconds,
                nu,
                nq,
                keys,
                seed: common.seed,
                collect: !no_collect,
                rounds,
                csv,
            })?;
            emit(&r, common.out.as_ref())?;
            Ok(r.passed())
        }
        Command::Stress {
            common,
            threads,
            seconds,
            keys,
            yield_one_in,
        } => {
            let r = run_stress(&StressConfig {
                algo: common.algo,
                threads,
                seconds,
                keys,
                seed: common.seed,
                yield_one_in,
            })?;
            emit(&r, common.out.as_ref())?;
            Ok(r.passed())
        }
        Command::Lincheck {
            common,
            trials,
            threads,
            ops,
            yield_one_in,
            fail_dir,
        } => {
            let r = run_lincheck(&LincheckConfig {
                algo: common.algo,
                trials,
                threads,
                ops,
                seed: common.seed,
                yield_one_in,
                fail_dir,
            })?;
            emit(&r, common.out.as_ref())?;
            Ok(r.all_passed())
        }
        Command::CheckHistory { file, out } => {
            let text = std::fs::read_to_string(&file)?;
            let h = HistoryFile::parse(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", file.display())))?;
            let report = check_linearizable(&h.history, h.processes, h.initial)?;
            let v = HistoryVerdict {
                command: "check-history",
                file: file.display().to_string(),
                operations: h.history.len() / 2,
                linearizable: report.passed(),
                linearization_or_prefix: format!("{:?}", report.witness),
            };
            emit(&v, out.as_ref())?;
            Ok(v.linearizable)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("verso: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
