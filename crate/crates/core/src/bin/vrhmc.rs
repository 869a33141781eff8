use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vrhmc::experiment::{
    print_advisory, run_logistic, run_synthetic, ExperimentConfig, ExperimentKind, Overrides, RawConfig,
};
use vrhmc::{EstimatorKind, Result};

#[derive(Parser)]
#[command(
    name = "vrhmc",
    version,
    about = "Variance-reduced Hamiltonian Monte Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadratic target with analytic moments.
    Synthetic(Common),
    /// Bayesian logistic regression on a LIBSVM dataset.
    Logistic(Common),
    /// Theoretical step-size bound for each configured method.
    Advisory {
        /// Which experiment's model to evaluate.
        #[arg(long, default_value = "synthetic")]
        experiment: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long accumulation and large ensembles instead of desk-scale defaults.
    #[arg(long)]
    full_scale: bool,
    /// Record gradient error and Q_k at every recorded row.
    #[arg(long)]
    diagnostics: bool,
    /// Comma-separated methods: full, sg, saga, svrg, sarah, sarge.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epoch: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
}

fn resolve(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig> {
    let raw = match &c.config {
        Some(path) => RawConfig::read(path)?,
        None => RawConfig::default(),
    };
    let methods = c
        .estimator
        .as_deref()
        .map(|list| {
            list.split(',')
                .map(|s| s.parse::<EstimatorKind>())
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let overrides = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        full_scale: c.full_scale,
        diagnostics: c.diagnostics,
        methods,
        batch: c.batch,
        epoch: c.epoch,
        step: c.step,
    };
    ExperimentConfig::resolve(kind, &raw, &overrides)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthetic(c) => {
            let config = resolve(ExperimentKind::Synthetic, &c)?;
            let summary = run_synthetic(&config)?;
            print!("{}", std::fs::read_to_string(config.out.join("table.txt"))?);
            eprintln!("wrote {} methods to {}", summary.methods.len(), config.out.display());
        }
        Command::Logistic(c) => {
            let config = resolve(ExperimentKind::Logistic, &c)?;
            let summary = run_logistic(&config)?;
            print!("{}", std::fs::read_to_string(config.out.join("table.txt"))?);
            eprintln!("wrote {} methods to {}", summary.methods.len(), config.out.display());
        }
        Command::Advisory { experiment, common } => {
            let config = resolve(experiment.parse()?, &common)?;
            print!("{}", print_advisory(&config)?.1);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
