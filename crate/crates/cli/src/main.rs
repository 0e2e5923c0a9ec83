use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsk_core::acceptance::Level;

mod commands;
mod config;
mod output;

use commands::{AsymptoticsArgs, CliError, Context, Outcome};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "nsk", version, about = "Simulate and verify compressible Navier-Stokes-Korteweg flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the Green matrix against its ODE, semigroup and determinant identities.
    LinearVerify(Common),
    /// Run the nonlinear solver and write snapshots and diagnostics.
    Simulate(Common),
    /// Evaluate Besov or Chemin-Lerner norms of a snapshot or trajectory.
    Norms {
        #[command(flatten)]
        common: Common,
        /// Snapshot file or trajectory directory.
        input: Option<PathBuf>,
    },
    /// Fit a power-law decay rate to a CSV column.
    DecayFit {
        #[command(flatten)]
        common: Common,
        input: Option<PathBuf>,
    },
    /// Compare a trajectory against its leading asymptotic profile.
    Asymptotics {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Trajectory directory written by `simulate`.
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        /// Report file (`*.json`) or output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track the Gevrey-weighted norms and the analyticity radius.
    Gevrey(Common),
    /// Run the acceptance criteria.
    Acceptance {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "fast")]
        level: Level,
    },
}

fn context(config: Option<&PathBuf>, out: Option<PathBuf>, seed: Option<u64>, default_out: &str) -> Result<Context, CliError> {
    let config = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out = out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(default_out));
    let seed = seed.unwrap_or(config.seed);
    Ok(Context { config, out, seed })
}

fn ctx(c: Common, default_out: &str) -> Result<Context, CliError> {
    context(c.config.as_ref(), c.out, c.seed, default_out)
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::LinearVerify(c) => commands::linear_verify(&ctx(c, "nsk-linear-verify")?),
        Command::Simulate(c) => commands::simulate_cmd(&ctx(c, "nsk-simulate")?),
        Command::Norms { common, input } => commands::norms_cmd(&ctx(common, "nsk-norms")?, input),
        Command::DecayFit { common, input } => commands::decay_fit_cmd(&ctx(common, "nsk-decay-fit")?, input),
        Command::Asymptotics { config, seed, traj, s, p, out } => {
            let c = context(config.as_ref(), None, seed, "nsk-asymptotics")?;
            commands::asymptotics_cmd(&c, &AsymptoticsArgs { traj, s, p, out })
        }
        Command::Gevrey(c) => commands::gevrey_cmd(&ctx(c, "nsk-gevrey")?),
        Command::Acceptance { common, level } => commands::acceptance_cmd(&ctx(common, "nsk-acceptance")?, level),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => {
            match &outcome {
                Outcome::Complete => {}
                Outcome::Aborted(msg) => eprintln!("nsk: aborted: {msg}"),
                Outcome::Fail(msg) => eprintln!("nsk: FAIL: {msg}"),
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("nsk: {e}");
            ExitCode::from(match e {
                CliError::Core(nsk_core::NskError::GuardAbort { .. }) => 2,
                _ => 1,
            })
        }
    }
}
