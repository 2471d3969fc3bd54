//! `mgt-inverse`: forward solves, reconstructions and verification campaigns
//! for the MGT inverse-coefficient problem.
//!
//! Exit codes: 0 success or convergence, 1 error, 2 iteration cap reached,
//! 3 divergence guard tripped.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{exit, Suite};
use config::RunConfig;
use output::OutputDir;

#[derive(Parser)]
#[command(
    name = "mgt-inverse",
    version,
    about = "Carleman-based coefficient reconstruction for the MGT equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and export traces and energies.
    Forward(Common),
    /// Reconstruct gamma from synthetic boundary data.
    Reconstruct(Common),
    /// Run a verification campaign.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        suite: Suite,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (see config.schema.json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "mgt-out")]
    out: PathBuf,
    /// Overrides the noise and sampling seeds of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let (name, common, suite) = match cli.command {
        Command::Forward(c) => ("forward", c, None),
        Command::Reconstruct(c) => ("reconstruct", c, None),
        Command::Verify { common, suite } => ("verify", common, Some(suite)),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.apply_seed(seed);
    }
    let mut out = OutputDir::create(&common.out)?;
    let code = match suite {
        None if name == "forward" => commands::forward(&cfg, &mut out)?,
        None => commands::reconstruct(&cfg, &mut out)?,
        Some(suite) => commands::verify(&cfg, suite, &mut out)?,
    };
    out.finish(name, common.seed, code)?;
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::ERROR as u8)
        }
    }
}
