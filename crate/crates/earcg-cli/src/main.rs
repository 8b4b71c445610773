//! Command-line front end: parse experiment configurations, run the
//! selected solvers, and persist traces and summaries.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use earcg::model::BuiltinModel;
use earcg_cli::config::ExperimentConfig;
use earcg_cli::runner::{run_experiment, ExperimentOutcome};
use earcg_cli::summary::render_text;
use earcg_cli::HarnessError;

#[derive(Parser)]
#[command(
    name = "earcg-cli",
    about = "Run energy-adaptive Riemannian CG experiments and write CSV traces"
)]
struct Cli {
    /// List the built-in models and exit.
    #[arg(long)]
    list_models: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configurations.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration files (TOML).
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run only these solvers (comma-separated subset of the configured ones).
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<String>>,
    /// Run experiments concurrently. Solvers within one experiment always
    /// run sequentially to keep wall-time comparisons fair.
    #[arg(long)]
    parallel: bool,
}

fn describe(model: BuiltinModel) -> &'static str {
    match model {
        BuiltinModel::Gp1d => "1-d cosine well, strongly nonlinear; fast reference model",
        BuiltinModel::Stiff1d => {
            "1-d band-limited random multi-well at a high kinetic cutoff; stiff spectrum"
        }
        BuiltinModel::Gp3dSmoke => "16^3-grid 3-d model with Hartree term; dimensionality smoke",
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if cli.list_models {
        for model in BuiltinModel::ALL {
            println!("{:<12} {}", model.name(), describe(model));
        }
        return Ok(());
    }
    let Some(Command::Run(args)) = cli.command else {
        return Err(HarnessError::Config(
            "nothing to do: pass `run <config>...` or --list-models".into(),
        ));
    };

    // Load and validate every configuration up front so config errors
    // surface before any solver runs.
    let mut experiments: Vec<(String, ExperimentConfig)> = Vec::new();
    for path in &args.configs {
        let cfg = ExperimentConfig::load(path)?.with_overrides(
            args.seed,
            args.out.as_deref(),
            args.solvers.as_deref(),
        )?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment")
            .to_string();
        experiments.push((name, cfg));
    }
    let mut seen = BTreeSet::new();
    for (name, _) in &experiments {
        if !seen.insert(name.clone()) {
            return Err(HarnessError::Config(format!(
                "two configs share the experiment name '{name}'; outputs would collide"
            )));
        }
    }

    let results: Vec<Result<ExperimentOutcome, HarnessError>> = if args.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = experiments
                .iter()
                .map(|(name, cfg)| scope.spawn(move || run_experiment(cfg, name)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(HarnessError::Internal("experiment thread panicked".into()))
                    })
                })
                .collect()
        })
    } else {
        experiments
            .iter()
            .map(|(name, cfg)| run_experiment(cfg, name))
            .collect()
    };

    for result in results {
        let outcome = result?;
        print!("{}", render_text(&outcome));
    }
    Ok(())
}
