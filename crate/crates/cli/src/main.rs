mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use dimeron_core::{Error, Result};

use crate::commands::{Context, Outcome};
use crate::config::RunConfig;

/// Spectra of laser-dressed Rydberg macrodimers and atom-loss correlations
/// in lattice snapshots.
///
/// Exit status: 0 on success, 1 on a configuration or input error, 2 when a
/// numerical search did not converge (outputs are still written).
#[derive(Debug, Parser)]
#[command(name = "dimeron-lab", version)]
struct Cli {
    /// Run configuration with `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "DIMERON_LAB_THREADS")]
    threads: Option<usize>,
    /// Overrides sampler.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress notes on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-atom absorption spectrum for each listed coupling.
    Spectrum2,
    /// Three-atom absorption spectrum with feature classification.
    Spectrum3,
    /// Even and odd scattering phases of the two-atom continuum.
    Phases,
    /// Macrodimeron splitting against the coupling.
    Splitting,
    /// G2 and G3 maps of an image-set file.
    Correlate {
        /// Image set in the JSON format written by `sample`.
        images: PathBuf,
    },
    /// Synthetic image set from the sampler section.
    Sample,
    /// Pair and triple loss probabilities reproducing target correlators.
    FitRatio {
        /// Target G2(R0); defaults to fit.g2.
        #[arg(long, allow_negative_numbers = true)]
        g2: Option<f64>,
        /// Target G3_R0(-R0); defaults to fit.g3.
        #[arg(long, allow_negative_numbers = true)]
        g3: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.sampler.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let ctx = Context { config: &config, out: &cli.out, verbose: cli.verbose };
    match cli.command {
        Command::Spectrum2 => commands::spectrum2(&ctx),
        Command::Spectrum3 => commands::spectrum3(&ctx),
        Command::Phases => commands::phases(&ctx),
        Command::Splitting => commands::splitting(&ctx),
        Command::Correlate { images } => commands::correlate(&ctx, &images),
        Command::Sample => commands::sample(&ctx),
        Command::FitRatio { g2, g3 } => commands::fit(&ctx, g2, g3),
    }
}

fn main() -> ExitCode {
    let help = format!("Configuration keys and defaults:\n{}", RunConfig::defaults_text());
    let matches = Cli::command().after_long_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = run(cli);
    if let Ok(outcome) = &result {
        for f in &outcome.files {
            println!("{}", f.display());
        }
    }
    match result {
        Ok(outcome) if outcome.converged => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("dimeron-lab: search stopped above tolerance; best candidate written");
            ExitCode::from(2)
        }
        Err(e @ Error::Convergence(_)) => {
            eprintln!("dimeron-lab: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("dimeron-lab: {e}");
            ExitCode::from(1)
        }
    }
}
