//! Command-line front end: argument parsing, signal wiring, exit codes.
//! All real work happens in the `linkstab` library.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use linkstab::app::{self, AppError};
use linkstab::config::AppConfig;

#[derive(Parser)]
#[command(
    name = "linkstab",
    version,
    about = "Multi-uplink stability monitor with dynamic routing weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live measurement loop until terminated.
    Run {
        /// JSON configuration file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scripted scenario offline and write its iteration log.
    Simulate {
        /// JSON scenario file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output JSONL log path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the stability-percentage series from an iteration log.
    Report {
        /// JSONL log to read.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute every index from the log's ticks and verify the log.
    Replay {
        /// JSONL log to verify.
        #[arg(long)]
        log: PathBuf,
        /// Also check the log header against this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
}

fn run_command(config_path: &Path) -> Result<(), AppError> {
    let config = AppConfig::load(config_path)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    for signal in signal_hook::consts::TERM_SIGNALS {
        if let Err(e) = signal_hook::flag::register(*signal, shutdown.clone()) {
            log::warn!("cannot install handler for signal {signal}: {e}");
        }
    }
    app::run(&config, &shutdown)
}

fn report_command(log: &Path, out: Option<&Path>) -> Result<(), AppError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|source| AppError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            app::report_csv(log, file)
        }
        None => app::report_csv(log, std::io::stdout().lock()),
    }
}

fn replay_command(log: &Path, config: Option<&Path>) -> Result<(), AppError> {
    let expected = match config {
        Some(path) => Some(AppConfig::load(path)?.params),
        None => None,
    };
    let verified = app::replay_verify(log, expected.as_ref())?;
    println!("ok: {verified} iterations verified");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run_command(config),
        Command::Simulate { scenario, out } => app::simulate_to_file(scenario, out),
        Command::Report { log, format, out } => {
            let ReportFormat::Csv = format;
            report_command(log, out.as_deref())
        }
        Command::Replay { log, config } => replay_command(log, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let _ = writeln!(std::io::stderr(), "error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
