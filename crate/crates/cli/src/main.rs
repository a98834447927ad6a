// SPDX-License-Identifier: Apache-2.0

//! `qlan` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "qlan", version, about = "Fisher information and asymptotic normality for monitored open quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `output_dir`, default `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Fisher informations over (theta0, phi) grids.
    Fisher,
    /// Exact characteristic functions against their Gaussian limits.
    Lan,
    /// Monte Carlo trajectories with plug-in estimation.
    Simulate,
    /// Data behind the homodyne and maser figures.
    Figdata,
    /// Check a config and certify irreducibility.
    Validate,
}

const EXIT_IRREDUCIBLE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<qlan::Error>() {
            use qlan::Error::*;
            return match e {
                _ if e.is_irreducibility() => EXIT_IRREDUCIBLE,
                InvalidArgument(_)
                | BadChannel { .. }
                | NonHermitianHamiltonian { .. }
                | ZeroCoupling
                | CutoffTooSmall { .. }
                | MissingSecondDerivatives
                | StepTooLarge { .. } => EXIT_VALIDATION,
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_NUMERICAL
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config::bad("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| config::bad(format!("cannot create {}: {e}", out.display())))?;
    let ctx = Ctx { cfg, out };
    let written = match cli.command {
        Command::Fisher => commands::fisher(&ctx)?,
        Command::Lan => commands::lan(&ctx)?,
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Figdata => commands::figdata(&ctx)?,
        Command::Validate => commands::validate(&ctx)?,
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(EXIT_VALIDATION);
        }
        builder = builder.num_threads(j);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
