use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use bathyfer_cli::commands::{self, AccessLog, Invocation};
use bathyfer_cli::config::RunConfig;
use bathyfer_cli::{CliError, EXIT_INPUT};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Calibrate,
    Infer,
    Sweep,
    Landscape,
    Report,
}

/// Bayesian bathymetry reconstruction from free-surface sensor records.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for chains and landscape rows.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| bathyfer::Error::Input(format!("cannot start {n} threads: {e}")))?;
    }
    let (mut config, bytes) = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let log = AccessLog::default();
    let inv = Invocation { config: &config, config_bytes: &bytes, out: out.clone(), log: &log };
    match args.command {
        Command::Simulate => commands::cmd_simulate(&inv),
        Command::Calibrate => commands::cmd_calibrate(&inv),
        Command::Infer => commands::cmd_infer(&inv).map(|_| ()),
        Command::Sweep => commands::cmd_sweep(&inv).map(|_| ()),
        Command::Landscape => commands::cmd_landscape(&inv).map(|_| ()),
        Command::Report => commands::cmd_report(&out),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
