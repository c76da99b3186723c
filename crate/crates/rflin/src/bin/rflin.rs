//! Thin pipeline CLI: check, linearize, bound, synth, sim, plot.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rflin::modelfile;
use rflin::pipeline::Pipeline;

#[derive(Parser)]
#[command(name = "rflin", about = "robust feedback linearization + minimax LQR pipeline")]
struct Cli {
    /// Model file (TOML).
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the solver seed from the model file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate the model file.
    Check,
    /// Relative degrees, decoupling matrix, linearizing law.
    Linearize,
    /// Mean-value-theorem uncertainty bounds.
    Bound,
    /// Minimax LQR synthesis.
    Synth,
    /// Closed-loop simulation of the three standard cases.
    Sim,
    /// SVG plots from the stored trajectories.
    Plot,
}

fn run(cli: Cli) -> rflin::Result<String> {
    let model_path = cli
        .model
        .ok_or_else(|| rflin::Error::Model("missing --model <path>".into()))?;
    let mut lm = modelfile::load(&model_path)?;
    if let Some(seed) = cli.seed {
        lm.solver.seed = seed;
    }
    if cli.verbose {
        for w in &lm.warnings {
            eprintln!("warning: {w}");
        }
    }
    let pipe = Pipeline::new(lm, cli.out, cli.verbose)?;
    match cli.cmd {
        Cmd::Check => pipe.check(),
        Cmd::Linearize => pipe.linearize(),
        Cmd::Bound => pipe.bound(),
        Cmd::Synth => pipe.synth(),
        Cmd::Sim => pipe.sim(),
        Cmd::Plot => pipe.plot(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
