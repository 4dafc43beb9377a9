//! `ratioq`: simulate speckled scenes, run reference filters and score them
//! through their ratio images.

mod cmd_evaluate;
mod cmd_filter;
mod cmd_metrics;
mod cmd_simulate;
mod cmd_tune;
mod common;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status for data and validation failures.
const EXIT_DATA: u8 = 3;
/// Exit status when no textureless area can be found.
const EXIT_NO_TEXTURELESS: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ratioq", version, about = "Unassisted quality assessment of despeckling filters")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a phantom and its noisy observation.
    Simulate(cmd_simulate::Args),
    /// Apply a despeckling filter.
    Filter(cmd_filter::Args),
    /// Score filtered images with M = r + delta_h.
    Evaluate(cmd_evaluate::Args),
    /// Reference-based metrics against a known truth.
    Metrics(cmd_metrics::Args),
    /// Grid search of filter parameters minimizing M.
    Tune(cmd_tune::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let ctx = manifest::RunContext::start(argv, cli.threads);
    match cli.command {
        Command::Simulate(a) => cmd_simulate::run(a, ctx),
        Command::Filter(a) => cmd_filter::run(a, ctx),
        Command::Evaluate(a) => cmd_evaluate::run(a, ctx),
        Command::Metrics(a) => cmd_metrics::run(a, ctx),
        Command::Tune(a) => cmd_tune::run(a, ctx),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(ratioq::Error::NoTexturelessArea(_)) = cause.downcast_ref::<ratioq::Error>() {
            return EXIT_NO_TEXTURELESS;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.threads {
        Some(0) => Err(anyhow::anyhow!("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(e.into()),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
