//! Command-line front end: runs an experiment sweep (or a single strategy
//! cell) from a TOML config file.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use fedagg::baselines::{Strategy, STRATEGY_NAMES};
use fedagg::dualcrit::LambdaGrid;
use fedagg::orchestrator::{run_sweep, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "fedagg",
    about = "Federated aggregation benchmark: dual-criterion weighting vs seven baselines",
    after_help = "Examples:\n  \
        fedagg --print-default-config > experiment.toml\n  \
        fedagg --config experiment.toml --out-dir results\n  \
        fedagg --config experiment.toml --strategy dualcrit --rounds 10 --seed 42"
)]
struct Cli {
    /// TOML config file; defaults are used when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run only this strategy instead of the configured list
    #[arg(long, value_name = "NAME")]
    strategy: Option<String>,

    /// Comma-separated lambda grid override, e.g. "0,0.5,1"
    #[arg(long, value_name = "VALUES")]
    lambda_grid: Option<String>,

    /// Number of federated rounds per cell
    #[arg(long, value_name = "N")]
    rounds: Option<usize>,

    /// Sweep seed (controls data, init, training, and noise)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Output directory for CSVs, checkpoints, and summary.json
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads for sweep cells (outputs are identical at any level)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Print the available strategy names and exit
    #[arg(long)]
    list_strategies: bool,

    /// Print the default config TOML and exit
    #[arg(long)]
    print_default_config: bool,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.list_strategies {
        for name in STRATEGY_NAMES {
            println!("{name}");
        }
        return Ok(());
    }
    if cli.print_default_config {
        print!("{}", ExperimentConfig::default_toml());
        return Ok(());
    }

    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &cli.strategy {
        let strategy: Strategy = name.parse()?;
        cfg.sweep.strategies = vec![strategy.as_str().to_string()];
    }
    if let Some(grid) = &cli.lambda_grid {
        let values = grid
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .with_context(|| format!("invalid --lambda-grid \"{grid}\""))?;
        LambdaGrid::new(values.clone())?;
        cfg.strategies.lambda_grid = values;
    }
    if let Some(rounds) = cli.rounds {
        cfg.sweep.rounds = rounds;
    }
    if let Some(seed) = cli.seed {
        cfg.sweep.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.sweep.out_dir = dir.display().to_string();
    }
    if let Some(workers) = cli.workers {
        cfg.sweep.workers = workers;
    }
    cfg.validate()?;

    let record = run_sweep(&cfg)?;
    println!(
        "sweep finished: {} cells x {} rounds -> {}",
        record.cells.len(),
        cfg.sweep.rounds,
        cfg.sweep.out_dir
    );
    for cell in &record.cells {
        let label = fedagg::orchestrator::combination_label(&cell.combination);
        match (&cell.error, cell.best_accuracy) {
            (Some(err), _) => println!("  {label} {:<12} ABORTED: {err}", cell.strategy),
            (None, Some(acc)) => println!(
                "  {label} {:<12} best accuracy {:.4} (round {})",
                cell.strategy,
                acc,
                cell.best_round.unwrap_or(0)
            ),
            (None, None) => println!("  {label} {:<12} no rounds completed", cell.strategy),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
