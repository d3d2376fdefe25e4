//! `zefoz`: command-line front end for the clock-transition toolkit.

mod commands;
mod config;
mod error;
mod import;
mod output;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, DecayColumns, FieldColumns};
use error::{CliError, CliResult};
use output::{Format, Output};

#[derive(Debug, Parser)]
#[command(name = "zefoz", version, about = "Spin-Hamiltonian analysis of low-field clock transitions")]
struct Cli {
    /// TOML run configuration (built-in default when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for map generation (0: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomised search starts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Zero-field (or fixed-field) transition table.
    Levels,
    /// |S1| over a field plane plus an angle scan.
    MapS1,
    /// Hahn-echo decay map along a field sweep.
    MapEcho,
    /// Search for the applied field that zeroes the transition gradient.
    Zefoz,
    /// Inhomogeneously broadened Rabi oscillation.
    Rabi,
    /// Two-pulse ESEEM envelope at one field.
    Eseem,
    /// Fit decay curves or T2 against field from CSV.
    #[command(subcommand)]
    Fit(FitCommand),
}

#[derive(Debug, Subcommand)]
enum FitCommand {
    /// Stretched exponential E0 exp(-(2 tau / T2)^m).
    Decay(DecayArgs),
    /// T2(B) = 1 / (1/T2(0) + pi kappa |B - B0|).
    T2(T2Args),
}

#[derive(Debug, Args)]
struct DecayArgs {
    file: PathBuf,
    /// Delay column (header name or 0-based index).
    #[arg(long, default_value = "tau_s")]
    tau_col: String,
    #[arg(long, default_value = "amplitude")]
    amp_col: String,
    /// Amplitude uncertainty column; enables weighting.
    #[arg(long)]
    sigma_col: Option<String>,
    /// Unit of the delay column.
    #[arg(long, default_value = "s")]
    time_unit: String,
}

#[derive(Debug, Args)]
struct T2Args {
    file: PathBuf,
    #[arg(long, default_value = "B_T")]
    field_col: String,
    #[arg(long, default_value = "T2_s")]
    t2_col: String,
    /// T2 uncertainty column, same unit as T2; enables weighting.
    #[arg(long)]
    sigma_col: Option<String>,
    #[arg(long, default_value = "T")]
    field_unit: String,
    #[arg(long, default_value = "s")]
    time_unit: String,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    let loaded = config::load(cli.config.as_deref())?;
    let block = &loaded.config.output;
    let format = match (cli.format, &block.format) {
        (Some(f), _) => f,
        (None, Some(s)) => Format::parse(s)?,
        (None, None) => Format::Both,
    };
    let dir = cli
        .out
        .or_else(|| block.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    log::debug!("config {} ({})", loaded.source, loaded.sha256);
    let ctx = Context {
        config: loaded,
        out: Output { dir, format },
        seed: cli.seed,
    };
    match &cli.command {
        Command::Levels => commands::levels(&ctx),
        Command::MapS1 => commands::map_s1(&ctx),
        Command::MapEcho => commands::map_echo(&ctx),
        Command::Zefoz => commands::zefoz(&ctx),
        Command::Rabi => commands::rabi(&ctx),
        Command::Eseem => commands::eseem(&ctx),
        Command::Fit(FitCommand::Decay(a)) => commands::fit_decay(
            &ctx,
            &a.file,
            &DecayColumns {
                tau: &a.tau_col,
                amplitude: &a.amp_col,
                sigma: a.sigma_col.as_deref(),
                time_unit: &a.time_unit,
            },
        ),
        Command::Fit(FitCommand::T2(a)) => commands::fit_t2(
            &ctx,
            &a.file,
            &FieldColumns {
                field: &a.field_col,
                t2: &a.t2_col,
                sigma: a.sigma_col.as_deref(),
                field_unit: &a.field_unit,
                time_unit: &a.time_unit,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
