use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tim_dcop::scenarios::Policy;
use tim_dcop::Error;

mod manifest;
mod run;
mod sweep;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "tim-dcop", version, about = "Proactive traffic incident management simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under one or more policies.
    Run(RunArgs),
    /// Repeat a scenario over a grid of parameter values and aggregate.
    Sweep(SweepArgs),
    /// Re-run from a manifest written by `run` or `sweep`.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Policies to run: CONVENTIONAL, PDRONETIM, OPT. Defaults to all three.
    #[arg(long, num_args = 1..)]
    policy: Vec<Policy>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base scenario; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// `name=v1,v2,...` with name one of iterations, threshold, ervs, uavs,
    /// incidents. Repeat for a full factorial grid.
    #[arg(long, required = true)]
    axis: Vec<String>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, num_args = 1.., default_values_t = [Policy::Pdronetim])]
    policy: Vec<Policy>,
    #[arg(long)]
    out: PathBuf,
    /// First trial seed; trial k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ModelDomain(_) => 1,
        Error::CapExceeded { .. } => 3,
        Error::InvalidInput(_) | Error::Io(_) | Error::Json(_) => 2,
    }
}

fn init_workers() -> tim_dcop::Result<()> {
    let Ok(v) = std::env::var("TIMDCOP_WORKERS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("TIMDCOP_WORKERS must be a positive integer, got {v:?}")))?;
    // fails only if a pool already exists, which cannot happen this early
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> tim_dcop::Result<()> {
    init_workers()?;
    match cli.command {
        Command::Run(a) => {
            let policies = if a.policy.is_empty() { Policy::ALL.to_vec() } else { a.policy };
            let m = RunManifest::for_run(&a.scenario, a.seed, policies, &a.out)?;
            run::execute(&m, &a.out)
        }
        Command::Sweep(a) => {
            let m = RunManifest::for_sweep(a.scenario.as_deref(), &a.axis, a.trials, a.seed, a.policy, &a.out)?;
            sweep::execute(&m, &a.out)
        }
        Command::Replay { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            match m.command.as_str() {
                "run" => run::execute(&m, &out),
                "sweep" => sweep::execute(&m, &out),
                other => Err(Error::InvalidInput(format!("unknown manifest command {other:?}"))),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
