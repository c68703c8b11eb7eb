use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use planelike::io::config::load_config;
use planelike::io::{run_pipeline, Mode};

const THREADS_ENV: &str = "PLANELIKE_THREADS";

#[derive(Clone, Copy, ValueEnum)]
enum Command {
    Solve,
    Refine,
    Analyze,
    Sequence,
    Gamma,
    Verify,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Mode {
        match c {
            Command::Solve => Mode::Solve,
            Command::Refine => Mode::Refine,
            Command::Analyze => Mode::Analyze,
            Command::Sequence => Mode::Sequence,
            Command::Gamma => Mode::Gamma,
            Command::Verify => Mode::Verify,
        }
    }
}

/// Plane-like minimizers on the Heisenberg group.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Omit wall-clock data so reruns give identical files.
    #[arg(long)]
    deterministic: bool,
    /// Worker threads (falls back to PLANELIKE_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{THREADS_ENV}: not a thread count: {v:?}")),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let mut cfg = load_config(&cli.config).map_err(|e| format!("{}: {e}", cli.config.display()))?;
    cfg.mode = cli.command.into();
    let outcome = run_pipeline(&cfg, &cli.out, cli.deterministic)
        .map_err(|e| format!("{} failed: {e}", cfg.mode.name()))?;
    for c in &outcome.checks {
        let mark = if c.pass { "pass" } else { "FAIL" };
        println!("{mark} {:<28} {:>12.5e}  ({})", c.name, c.value, c.threshold);
    }
    Ok(outcome.success())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
