// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use harness::config::{apply_overrides, ExperimentConfig, Scale};
use harness::{recipes, Experiment};

#[derive(Parser)]
#[command(
    name = "mechrecall",
    version,
    about = "Train toy sequence models on retrieval tasks and classify their mechanisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset.
    Gen(Target),
    /// Train every run of the grid; finished runs are skipped.
    Train(Target),
    /// Evaluate the best run of each cell on dev and test.
    Eval(Target),
    /// Intervention grids and mechanism labels for the best runs.
    Intervene(Target),
    /// gen, train, eval, intervene and report in one go.
    Sweep(Target),
    /// Write summary.csv from the existing artifacts.
    Report(Target),
    /// Print the registered recipes.
    ListRecipes,
}

#[derive(Args)]
struct Target {
    /// Experiment config file (JSON).
    #[arg(long, conflicts_with = "recipe")]
    config: Option<PathBuf>,
    /// Registered recipe name.
    #[arg(long)]
    recipe: Option<String>,
    #[arg(long, default_value = "desk")]
    scale: Scale,
    /// Dotted-path override, e.g. `train.epochs=4`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `$MECHRECALL_OUT/{name}-{scale}`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Target {
    fn experiment(&self) -> Result<Experiment> {
        let mut value = match (&self.config, &self.recipe) {
            (Some(p), None) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("{} is not valid JSON", p.display()))?
            }
            (None, Some(name)) => serde_json::to_value(recipes::find(name)?.config(self.scale))?,
            _ => bail!("pass exactly one of --config or --recipe"),
        };
        apply_overrides(&mut value, &self.set)?;
        if let Some(s) = self.seed {
            value["seed"] = s.into();
        }
        let mut cfg = ExperimentConfig::from_value(value)?;
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        let mut e = Experiment::new(cfg);
        e.workers = self.workers;
        Ok(e)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (target, cmd) = match &cli.command {
        Command::ListRecipes => {
            for r in recipes::registry() {
                println!("{:<26} {}", r.name, r.description);
            }
            return Ok(());
        }
        Command::Gen(t) => (t, "gen"),
        Command::Train(t) => (t, "train"),
        Command::Eval(t) => (t, "eval"),
        Command::Intervene(t) => (t, "intervene"),
        Command::Sweep(t) => (t, "sweep"),
        Command::Report(t) => (t, "report"),
    };
    let e = target.experiment()?;
    match cmd {
        "gen" => {
            let s = e.gen()?;
            println!(
                "train {}  dev {}  test {}",
                s.train.len(),
                s.dev.len(),
                s.test.len()
            );
        }
        "train" | "sweep" => {
            let s = if cmd == "train" {
                e.train()?
            } else {
                e.sweep()?
            };
            println!(
                "{} runs: {} trained, {} reused",
                s.records.len(),
                s.executed,
                s.skipped
            );
        }
        "eval" => {
            for l in e.eval()? {
                println!(
                    "{} {} acc {:.4} lik {:.4}",
                    l.run, l.split, l.accuracy, l.likelihood
                );
            }
        }
        "intervene" => {
            for l in e.intervene()? {
                println!("{} {}", l.run, l.label);
            }
        }
        _ => print!("{}", e.report()?),
    }
    let m = e.write_manifest()?;
    eprintln!("{} artifacts in {}", m.artifacts.len(), e.out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
