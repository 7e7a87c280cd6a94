//! `bdod`: run frequency sweeps, synthesis, domain-of-dependence checks and
//! decay fits for a scattering experiment described by a TOML config.
//!
//! Exit codes: 0 on success, 2 when a verdict fails, 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bdod::commands::{self, Ctx, Outcome};
use bdod::config::ExperimentConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdod", version, about = "Boundary-integral time-domain scattering experiments")]
struct Cli {
    /// Worker threads for assembly (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML, version 1).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-frequency solution cache; overrides `cache_dir` from the config.
    #[arg(long, env = "BDOD_CACHE")]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh and write `mesh.txt` and `mesh.json`.
    Mesh(Common),
    /// Solve the frequency-domain problem on the configured grid.
    Sweep(Common),
    /// Fit the growth exponent of the resolvent norm.
    Qfit {
        #[command(flatten)]
        common: Common,
        /// Fit `omega,norm` pairs from this CSV instead of `sweep.bin`.
        #[arg(long)]
        norms: Option<PathBuf>,
    },
    /// Invert the sweep to a time-domain density history.
    Synthesize(Common),
    /// Check the domain-of-dependence identity at the probes.
    DodVerify(Common),
    /// Fit decay exponents of the density, field and energy.
    Decay(Common),
    /// Exact unit-sphere spectra and resolvent norms.
    Oracle {
        #[arg(long, required = true, value_delimiter = ',')]
        kappa: Vec<f64>,
        /// Coupling; defaults to the wavenumber.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn context(c: &Common) -> anyhow::Result<Ctx> {
    let config = ExperimentConfig::load(&c.config)?;
    let out = c
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let cache = c.cache.clone().or_else(|| config.cache_dir.clone());
    Ok(Ctx { config, out, cache })
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Mesh(c) => commands::cmd_mesh(&context(&c)?),
        Command::Sweep(c) => commands::cmd_sweep(&context(&c)?),
        Command::Qfit { common, norms } => commands::cmd_qfit(&context(&common)?, norms.as_deref()),
        Command::Synthesize(c) => commands::cmd_synthesize(&context(&c)?),
        Command::DodVerify(c) => commands::cmd_dod_verify(&context(&c)?),
        Command::Decay(c) => commands::cmd_decay(&context(&c)?),
        Command::Oracle { kappa, eta, n_max, out } => commands::cmd_oracle(&out, &kappa, eta, n_max),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
