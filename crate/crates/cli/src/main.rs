//! `sppiv` command-line interface.
//!
//! Every subcommand reads a [`RunConfig`] (defaults, then `--config`, then
//! `--set` overrides, then the global flags), writes its files under the
//! output directory and prints a JSON summary on stdout. Failures print a
//! JSON error object on stderr and exit nonzero.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sppiv::harness::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "sppiv", version, about = "Sparse-processing PIV: train, place sensors, estimate, benchmark")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Config override as dotted.key=value, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a snapshot dataset from the synthetic flow.
    Synth(commands::SynthArgs),
    /// Fit the POD basis and linear model.
    Train,
    /// Place processing points greedily.
    Select,
    /// Run the estimator over a dataset.
    Estimate,
    /// K-fold cross-validation of the configured case.
    Validate,
    /// Parameter sweep over r, p, regimes and estimators.
    Sweep,
    /// Per-step timing against p.
    Bench,
    /// Paced real-time simulation.
    Rtsim,
}

fn load_config(g: &Global) -> sppiv::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&g.overrides)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> sppiv::Result<serde_json::Value> {
    let cfg = load_config(&cli.global)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
    match cli.command {
        Command::Synth(args) => commands::synth(&cfg, &args),
        Command::Train => commands::train(&cfg),
        Command::Select => commands::select(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Validate => commands::validate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::Rtsim => commands::rtsim(&cfg),
    }
}

fn fail(code: &str, message: &str, exit: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "code": code, "message": message } }));
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string().trim(), 2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary:#}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.code(), &e.to_string(), 1),
    }
}
