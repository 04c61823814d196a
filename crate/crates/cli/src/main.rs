//! `clustlda`: simulate corpora, fit clustered and baseline topic models,
//! evaluate fits and run hyperparameter sweeps.

mod evaluate;
mod fit;
mod manifest;
mod output;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "clustlda", version, about = "Joint topic modeling and author clustering")]
struct Cli {
    /// Worker threads for restarts and sweep cells (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic corpus together with its generating truth.
    Simulate(simulate::SimulateArgs),
    /// Fit clust-LDA or a baseline to a corpus.
    Fit(fit::FitArgs),
    /// Score a fit and export report tables.
    Evaluate(evaluate::EvaluateArgs),
    /// Simulate, fit and score over a grid of eta and sigma0.
    Sweep(sweep::SweepArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn replay(path: &PathBuf, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).context("parsing manifest")?;
    let plan = manifest.plan;
    match manifest.command.as_str() {
        "simulate" => {
            let mut plan: simulate::SimulatePlan = serde_json::from_value(plan)?;
            plan.out = out.unwrap_or(plan.out);
            simulate::run(&plan)
        }
        "fit" => {
            let mut plan: fit::FitPlan = serde_json::from_value(plan)?;
            plan.out = out.unwrap_or(plan.out);
            fit::run(&plan)
        }
        "evaluate" => {
            let mut plan: evaluate::EvaluatePlan = serde_json::from_value(plan)?;
            plan.out = out.unwrap_or(plan.out);
            evaluate::run(&plan)
        }
        "sweep" => {
            let mut plan: sweep::SweepPlan = serde_json::from_value(plan)?;
            plan.out = out.unwrap_or(plan.out);
            sweep::run(&plan)
        }
        other => bail!("manifest records unknown command {other:?}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => args.resolve().and_then(|p| simulate::run(&p)),
        Command::Fit(args) => args.resolve().and_then(|p| fit::run(&p)),
        Command::Evaluate(args) => evaluate::run(&args.resolve()),
        Command::Sweep(args) => args.resolve().and_then(|p| sweep::run(&p)),
        Command::Replay { manifest, out } => replay(&manifest, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
