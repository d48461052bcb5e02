use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdspred_cli::{commands, error_kind, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "sdspred", version, about = "Prediction-performance experiments for stochastic dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Monte-Carlo sample budget.
    #[arg(long, global = true)]
    budget: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Simulate trajectories.
    Simulate,
    /// Expected prediction rate of the configured predictor.
    Evaluate,
    /// Print d ln(2eps) - H(q).
    Exponent,
    /// Entropy-maximizing noise design and the candidate ranking.
    Design,
    /// Running rates of the optimal predictor on three trajectories.
    Fig1,
    /// Running rates under mean and covariance mismatch.
    Fig2,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Exponent => Command::Exponent,
            Cmd::Design => Command::Design,
            Cmd::Fig1 => Command::Fig1,
            Cmd::Fig2 => Command::Fig2,
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<Vec<String>> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| sdspred::Error::Config("--config is required".into()))?;
    let overrides = Overrides { seed: cli.seed, out: cli.out.clone(), budget: cli.budget };
    let cfg = commands::apply(ExperimentConfig::load(path)?, &overrides);
    cfg.validate()?;
    let cmd = Command::from(cli.command);
    match cli.workers {
        Some(0) => Err(sdspred::Error::Config("--workers must be at least 1".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| commands::run(&cfg, cmd)),
        None => commands::run(&cfg, cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = error_kind(&e);
            eprintln!("error kind={kind} message={:?}", format!("{e:#}"));
            ExitCode::from(if matches!(kind, "config" | "validation") { 2 } else { 1 })
        }
    }
}
