mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ConfigError, Format, RunConfig};
use output::Emitter;

#[derive(Debug, Parser)]
#[command(name = "qsync", version, about = "Q-function synchronization analysis of coupled stochastic oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `simulation.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format (overrides `output.format`).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Leading eigenvalues against coupling, with the first-order overlay.
    Eig,
    /// KT coupling per detuning and first-order splitting regimes.
    Kt,
    /// Synchronization classification over the (tau, kappa) grid.
    Tongue,
    /// Analytic and Welch power and cross spectra of the Q-functions.
    Spectra,
    /// Stationary density: exact, first order and Monte Carlo.
    Stationary,
    /// Projected phase differences of the nine-state model.
    Phasediff,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Kt => "kt",
            Command::Tongue => "tongue",
            Command::Spectra => "spectra",
            Command::Stationary => "stationary",
            Command::Phasediff => "phasediff",
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(d) = &cli.out {
        cfg.output.directory = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.simulation.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = resolve(cli)?;
    let mut out = Emitter::new(&cfg, cli.command.name())?;
    match cli.command {
        Command::Eig => commands::eig(&cfg, &mut out)?,
        Command::Kt => commands::kt(&cfg, &mut out)?,
        Command::Tongue => commands::tongue(&cfg, &mut out)?,
        Command::Spectra => commands::spectra(&cfg, &mut out)?,
        Command::Stationary => commands::stationary(&cfg, &mut out)?,
        Command::Phasediff => commands::phasediff(&cfg, &mut out)?,
    }
    Ok(out.written)
}

/// 1 for configuration and input errors, 2 for numerical failures.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(q) = cause.downcast_ref::<qsync::Error>() {
            return if q.is_input_error() { 1 } else { 2 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
