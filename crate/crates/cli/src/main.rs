//! `microlocal <verb> [--config FILE] [--output DIR] [--seed N] [--threads N]`
//!
//! Exit status: 0 on success, 1 for bad input or configuration, 2 when a
//! numerical check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microlocal::pipeline::{run, Overrides, Pipeline, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "microlocal", version, about = "Batch runs for bracket orders, FBI transforms, spectra and subelliptic probes")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Bracket order ν and Hörmander order at a point
    Nu(Common),
    /// FBI transform on a complex grid
    Fbi(Common),
    /// Gevrey-order fits and wave-front masks
    Gevrey(Common),
    /// Eigenpairs of −d²/dx² + x^{2(k−1)}
    Eig(Common),
    /// Non-smooth solution of the perturbed operator
    Counterexample(Common),
    /// Weight deformation under a generator
    Deform(Common),
    /// Checks of the weighted realization
    Realize(Common),
    /// Subelliptic estimate probes on a torus
    Estimate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed recorded in every output (overrides `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads`)
    #[arg(long)]
    threads: Option<usize>,
}

impl Verb {
    fn split(self) -> (Pipeline, Common) {
        match self {
            Verb::Nu(c) => (Pipeline::Nu, c),
            Verb::Fbi(c) => (Pipeline::Fbi, c),
            Verb::Gevrey(c) => (Pipeline::Gevrey, c),
            Verb::Eig(c) => (Pipeline::Eig, c),
            Verb::Counterexample(c) => (Pipeline::Counterexample, c),
            Verb::Deform(c) => (Pipeline::Deform, c),
            Verb::Realize(c) => (Pipeline::Realize, c),
            Verb::Estimate(c) => (Pipeline::Estimate, c),
        }
    }
}

fn execute(verb: Verb) -> Result<String, PipelineError> {
    let (pipeline, common) = verb.split();
    if common.threads == Some(0) {
        return Err(PipelineError::config("--threads must be at least 1"));
    }
    let ov = Overrides {
        output: common.output,
        seed: common.seed,
        threads: common.threads,
    };
    let config = match &common.config {
        Some(path) => RunConfig::load(Some(pipeline), path, &ov)?,
        None => RunConfig::parse(Some(pipeline), "", std::path::Path::new("."), &ov)?,
    };
    let outcome = run(&config)?;
    Ok(format!("{}\nmanifest: {}", outcome.summary, outcome.manifest_path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.verb) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
