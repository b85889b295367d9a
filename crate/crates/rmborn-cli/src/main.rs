//! `rmborn`: tables of detector response, string probabilities, bounds,
//! posterior traces and oracle checks from a JSON run configuration.

mod commands;
mod config;
mod output;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use config::RunConfig;
use output::{write_table, Format, Header};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "rmborn", version, about = "Repeated-measurement statistics of an Unruh-DeWitt detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed of the QMC shift and the random oracle instances.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Accept a window length other than 8 sigma.
    #[arg(long, global = true)]
    allow_custom_t_on: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Single-window excitation probabilities for inertial and accelerated motion.
    Transition,
    /// Born and repeated-measurement probabilities of every outcome string.
    StringProbs,
    /// Loose bounds on the conditional probability against the number of measurements.
    Bounds,
    /// Posterior snapshots for a stream of outcome strings.
    Bayes,
    /// Verification suite of the exact finite-dimensional model.
    Oracle,
    /// Partition and crossing counts.
    Combinatorics,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Transition => "transition",
            Command::StringProbs => "string-probs",
            Command::Bounds => "bounds",
            Command::Bayes => "bayes",
            Command::Oracle => "oracle",
            Command::Combinatorics => "combinatorics",
        }
    }
}

fn usage_exit() -> ExitCode {
    let _ = Cli::command().print_long_help();
    ExitCode::from(2)
}

fn run(cli: &Cli, text: &str) -> Result<()> {
    let mut cfg = RunConfig::from_json(text).context("invalid config")?;
    if let Some(seed) = cli.seed {
        cfg.quadrature.seed = seed;
    }
    cfg.validate(cli.allow_custom_t_on).context("invalid config")?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    // Hash of the effective configuration, defaults and seed included.
    let canonical = serde_json::to_vec(&cfg)?;
    let config_sha256: String = Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect();
    let seed = cfg.quadrature.seed;
    let table = match cli.command {
        Command::Transition => commands::transition(&cfg),
        Command::StringProbs => commands::string_probs(&cfg),
        Command::Bounds => commands::bounds(&cfg),
        Command::Bayes => commands::bayes(&cfg),
        Command::Oracle => commands::oracle(&cfg, seed),
        Command::Combinatorics => commands::combinatorics(&cfg),
    }
    .with_context(|| cli.command.name().to_string())?;
    let header = Header { command: cli.command.name(), config_sha256, seed };
    let mut buf = Vec::new();
    write_table(&mut buf, cli.format, &header, &table)?;
    match &cli.out {
        Some(path) => std::fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = &cli.config else {
        return usage_exit();
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    if text.trim().is_empty() {
        return usage_exit();
    }
    match run(&cli, &text) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
