mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use output::{write_output, Format};

/// Disclosure-risk estimation: sample uniques that are also population uniques.
#[derive(Debug, Parser, Serialize)]
#[command(name = "uniqrisk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Args, Serialize)]
struct GlobalArgs {
    /// Write data here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for simulations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed for anything random.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Frequency-of-frequencies profile of a sample.
    Profile(commands::ProfileArgs),
    /// Estimate the number of sample uniques that are population uniques.
    Estimate(commands::EstimateArgs),
    /// Reproduce one of the simulation tables.
    Simulate(commands::SimulateArgs),
    /// Evaluate the risk bounds on a grid of lambda.
    Bounds(commands::BoundsArgs),
    /// Best polynomial approximation and its lower bounds.
    Polyapprox(commands::PolyapproxArgs),
}

impl Command {
    fn default_format(&self) -> Format {
        match self {
            Command::Simulate(_) | Command::Bounds(_) => Format::Csv,
            _ => Format::Json,
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(commands::UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let format = cli.global.format.unwrap_or_else(|| cli.command.default_format());

    // the resolved configuration goes to stderr so stdout carries data only
    let mut config = serde_json::to_value(cli)?;
    config["global"]["format"] = serde_json::to_value(format)?;
    config["global"]["threads"] = rayon::current_num_threads().into();
    eprintln!("{}", serde_json::to_string(&config)?);

    let seed = cli.global.seed;
    let output = match &cli.command {
        Command::Profile(args) => commands::profile(args)?,
        Command::Estimate(args) => commands::estimate(args)?,
        Command::Simulate(args) => commands::simulate(args, seed)?,
        Command::Bounds(args) => commands::bounds(args)?,
        Command::Polyapprox(args) => commands::polyapprox(args)?,
    };
    write_output(&output.render(format)?, cli.global.out.as_deref())?;
    output.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
