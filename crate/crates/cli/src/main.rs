//! `ajb`: train, encode, and evaluate learned binary codes from the shell.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;
mod plot;

#[derive(Debug, Parser)]
#[command(name = "ajb", version, about = "Learned binary hashing with tangent-matching auto-encoders")]
#[command(args_override_self = true)]
struct Cli {
    /// key=value file with default flags for the subcommand; explicit flags win.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert vectors between fvecs, bvecs, and text.
    Convert(commands::ConvertArgs),
    /// Train a model and write it with its cost trace.
    Train(commands::TrainArgs),
    /// Encode vectors into packed binary codes.
    Encode(commands::EncodeArgs),
    /// Recall curves of a model against exact Euclidean neighbours.
    Eval(commands::EvalArgs),
    /// Compare analytic and finite-difference gradients on a random instance.
    Gradcheck(commands::GradcheckArgs),
    /// Train on the 2-simplex in R³ and report how the hidden layer spreads.
    Toy(commands::ToyArgs),
    /// Draw recall or cost CSVs as an SVG line chart.
    Plot(commands::PlotArgs),
    /// Sample base, query, and training sets from a curved synthetic manifold.
    Synth(commands::SynthArgs),
}

fn set_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("AJB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("AJB_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("AJB_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run() -> anyhow::Result<bool> {
    let args = config::expand_args(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    set_threads()?;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Convert(a) => commands::convert(a, config),
        Command::Train(a) => commands::train(a, config),
        Command::Encode(a) => commands::encode(a, config),
        Command::Eval(a) => commands::eval(a, config),
        Command::Gradcheck(a) => commands::gradcheck(a, config),
        Command::Toy(a) => commands::toy(a, config),
        Command::Plot(a) => commands::plot(a, config),
        Command::Synth(a) => commands::synth(a, config),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
