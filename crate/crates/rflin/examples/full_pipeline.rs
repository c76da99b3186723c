//! The whole toolchain driven from a model file, exactly as the `rflin`
//! command-line tool runs it: check, linearize, bound, synth, sim, plot,
//! with every stage writing a resumable artifact.
//!
//! ```bash
//! cargo run --release --example full_pipeline
//! ```

use std::path::PathBuf;

use rflin::modelfile;
use rflin::pipeline::Pipeline;

fn main() -> rflin::Result<()> {
    let model_path = PathBuf::from("models/pendulum.toml");
    let lm = modelfile::load(&model_path)?;
    for w in &lm.warnings {
        println!("warning: {w}");
    }

    let pipe = Pipeline::new(lm, PathBuf::from("out_pipeline"), false)?;

    // Each stage prints a one-line summary and persists its result, so a
    // later invocation (or the CLI) can resume from the artifacts.
    println!("{}", pipe.check()?);
    println!("{}", pipe.linearize()?);
    println!("{}", pipe.bound()?);
    println!("{}", pipe.synth()?);
    println!("{}", pipe.sim()?);
    println!("{}", pipe.plot()?);

    println!("artifacts in out_pipeline/: linearize.txt, bound.txt, design.txt,");
    println!("case1..3.csv, sim_summary.txt, and one SVG per case and signal group");
    Ok(())
}
