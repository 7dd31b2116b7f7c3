//! The federated round loop and the experiment sweep.
//!
//! One *round* distributes the global model to every participating client,
//! trains locally, collects (parameters, score, size) reports, aggregates
//! them with the configured strategy, and evaluates the new global model on
//! the validation set. A *sweep* runs every (client combination, strategy)
//! cell for a fixed number of rounds, checkpointing the global model
//! whenever its validation accuracy strictly improves.
//!
//! Everything is a pure function of the config (seeds included): client
//! training seeds derive from `(sweep seed, client id, round)`, so results
//! are identical across reruns and across worker-thread counts.

mod config;
mod output;

pub use config::{Averaging, DataSection, ExperimentConfig, StrategySection, SweepSection, TrainSection};
pub use output::{checkpoint_file_name, combination_label, metrics_file_name};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{
    dp_average, median_aggregate, momentum_aggregate, personalized_aggregate, quantize_aggregate,
    simple_average, weighted_mean, weighted_mean_weights, BaselineConfig, MomentumState, Strategy,
};
use crate::data::{build_layout, generate_synthetic, load_csv, DataLayout, DatasetShard, Example};
use crate::dualcrit::{dualcrit_weights, select_lambda, LambdaGrid};
use crate::error::{Error, Result};
use crate::learner::{
    derive_seed, evaluate_score, init_params, predict_batch, sorted_by_client, train_local,
    ClientReport, ModelSpec, TrainConfig,
};
use crate::metrics::ConfusionMatrix;
use crate::params::{write_checkpoint, ParameterVector};

/// Seed streams keeping the run's independent randomness sources apart.
/// Client training uses the client id itself as the stream, so these tags
/// sit far above any realistic client count.
const STREAM_DATA: u64 = (1 << 32) | 1;
const STREAM_INIT: u64 = (1 << 32) | 2;
const STREAM_DP: u64 = (1 << 32) | 3;
const STREAM_SHARED_CLIENT: u64 = (1 << 32) | 5;

/// Per-round evaluation record of one cell.
#[derive(Debug, Clone)]
pub struct RoundMetrics {
    /// 1-based round number.
    pub round: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    pub mcc: f64,
    /// The lambda picked by the grid search; `None` for baselines.
    pub lambda_chosen: Option<f64>,
    /// Convex client weights in canonical order, for the strategies that
    /// compute them (simple, weighted, dualcrit).
    pub weights: Option<Vec<f64>>,
}

/// Everything a single round needs besides the model and the shards.
pub struct RoundContext<'a> {
    pub spec: &'a ModelSpec,
    pub train: &'a TrainSection,
    pub evaluation_set: &'a [Example],
    pub validation_set: &'a [Example],
    pub baseline: &'a BaselineConfig,
    pub lambda_grid: &'a LambdaGrid,
    pub averaging: Averaging,
    /// The sweep-level seed all per-client seeds derive from.
    pub seed: u64,
    /// 1-based round number.
    pub round: usize,
}

/// Result of one (combination, strategy) cell.
#[derive(Debug, Clone)]
pub struct CellRecord {
    pub combination: Vec<usize>,
    pub strategy: Strategy,
    pub rounds: Vec<RoundMetrics>,
    /// Round whose model was last checkpointed (highest validation accuracy).
    pub best_round: Option<usize>,
    pub best_accuracy: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub duration_secs: f64,
    /// Set when the cell aborted (training divergence); earlier rounds are kept.
    pub error: Option<String>,
}

/// A whole sweep: one record per (combination, strategy) cell, in config order.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub cells: Vec<CellRecord>,
}

/// Trains every client of the round from a copy of the incoming global
/// model and collects their reports, in canonical client order.
pub(crate) fn collect_reports(
    global: &ParameterVector,
    clients: &[DatasetShard],
    ctx: &RoundContext<'_>,
) -> Result<Vec<ClientReport>> {
    let reports = clients
        .par_iter()
        .map(|shard| {
            let stream = if ctx.train.shared_client_seed {
                STREAM_SHARED_CLIENT
            } else {
                shard.client_id as u64
            };
            let cfg = TrainConfig {
                learning_rate: ctx.train.learning_rate,
                local_epochs: ctx.train.local_epochs,
                batch_size: ctx.train.batch_size,
                seed: derive_seed(ctx.seed, stream, ctx.round as u64),
            };
            let trained = train_local(global, shard, ctx.spec, &cfg)?;
            let score = evaluate_score(&trained, ctx.evaluation_set, ctx.spec)?;
            ClientReport::new(shard.client_id, trained, score, shard.size())
        })
        .collect::<Result<Vec<ClientReport>>>()?;
    let mut reports = reports;
    reports.sort_by_key(|r| r.client_id);
    Ok(reports)
}

fn evaluate_global(
    global: &ParameterVector,
    ctx: &RoundContext<'_>,
    lambda_chosen: Option<f64>,
    weights: Option<Vec<f64>>,
) -> Result<RoundMetrics> {
    let predictions = predict_batch(global, ctx.spec, ctx.validation_set)?;
    let truth: Vec<usize> = ctx.validation_set.iter().map(|e| e.label).collect();
    let matrix = ConfusionMatrix::from_pairs(&predictions, &truth, ctx.spec.num_classes)?;
    let (precision, f1) = match ctx.averaging {
        Averaging::Macro => (matrix.precision_macro(), matrix.f1_macro()),
        Averaging::Micro => (matrix.precision_micro(), matrix.f1_micro()),
    };
    Ok(RoundMetrics {
        round: ctx.round,
        accuracy: matrix.accuracy(),
        precision,
        f1,
        mcc: matrix.mcc(),
        lambda_chosen,
        weights,
    })
}

/// Runs one communication round and returns the new global model plus its
/// validation metrics. `momentum` is threaded through for the momentum
/// strategy and left untouched by every other one.
pub fn run_round(
    global: &ParameterVector,
    clients: &[DatasetShard],
    strategy: Strategy,
    ctx: &RoundContext<'_>,
    momentum: &mut MomentumState,
) -> Result<(ParameterVector, RoundMetrics)> {
    if clients.is_empty() {
        return Err(Error::EmptyInput("clients"));
    }
    let reports = collect_reports(global, clients, ctx)?;
    let ordered = sorted_by_client(&reports);

    let mut lambda_chosen = None;
    let mut weights = None;
    let new_global = match strategy {
        Strategy::Simple => {
            weights = Some(vec![1.0 / ordered.len() as f64; ordered.len()]);
            simple_average(&reports)?
        }
        Strategy::Weighted => {
            weights = Some(weighted_mean_weights(&ordered)?);
            weighted_mean(&reports)?
        }
        Strategy::Median => median_aggregate(&reports)?,
        Strategy::Momentum => {
            let (global, next) = momentum_aggregate(&reports, global, momentum)?;
            *momentum = next;
            global
        }
        Strategy::Personalized => {
            personalized_aggregate(&reports, global, ctx.baseline.alpha)?
        }
        Strategy::Dp => {
            let noise_seed = derive_seed(ctx.baseline.noise_seed, STREAM_DP, ctx.round as u64);
            dp_average(&reports, ctx.baseline.epsilon, noise_seed)?
        }
        Strategy::Quantized => quantize_aggregate(&reports, ctx.baseline.q_level)?,
        Strategy::DualCrit => {
            let (lambda, model) =
                select_lambda(&reports, ctx.lambda_grid, ctx.validation_set, ctx.spec)?;
            lambda_chosen = Some(lambda);
            weights = Some(dualcrit_weights(&reports, lambda)?);
            model
        }
    };
    let metrics = evaluate_global(&new_global, ctx, lambda_chosen, weights)?;
    Ok((new_global, metrics))
}

/// Runs one (combination, strategy) cell: `rounds` federated rounds with
/// save-on-improve checkpointing. When `out_dir` is given, a metrics CSV is
/// flushed per round and the best model is checkpointed there.
///
/// Training divergence aborts the cell and is recorded in the cell record;
/// I/O failures propagate as errors.
pub fn run_cell(
    cfg: &ExperimentConfig,
    layout: &DataLayout,
    combination: &[usize],
    strategy: Strategy,
    out_dir: Option<&Path>,
) -> Result<CellRecord> {
    let start = Instant::now();
    let spec = &cfg.model;
    let baseline = cfg.baseline_config();
    let lambda_grid = cfg.lambda_grid()?;
    let averaging = cfg.averaging()?;

    let mut clients: Vec<DatasetShard> = combination
        .iter()
        .map(|&id| {
            layout
                .shards
                .iter()
                .find(|s| s.client_id == id)
                .cloned()
                .ok_or(Error::InvalidArgument {
                    what: "combination client id",
                    value: id as f64,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    clients.sort_by_key(|s| s.client_id);

    let mut csv = match out_dir {
        Some(dir) => Some(output::MetricsCsv::create(
            &dir.join(metrics_file_name(combination, strategy.as_str())),
            combination,
        )?),
        None => None,
    };
    let checkpoint_path = out_dir.map(|dir| dir.join(checkpoint_file_name(combination, strategy.as_str())));

    let mut global = init_params(spec, derive_seed(cfg.sweep.seed, STREAM_INIT, 0))?;
    let mut momentum = MomentumState::new(global.len(), baseline.beta, baseline.eta)?;

    let mut record = CellRecord {
        combination: combination.to_vec(),
        strategy,
        rounds: Vec::with_capacity(cfg.sweep.rounds),
        best_round: None,
        best_accuracy: None,
        checkpoint: None,
        duration_secs: 0.0,
        error: None,
    };

    for round in 1..=cfg.sweep.rounds {
        let ctx = RoundContext {
            spec,
            train: &cfg.train,
            evaluation_set: &layout.evaluation_set,
            validation_set: &layout.validation_set,
            baseline: &baseline,
            lambda_grid: &lambda_grid,
            averaging,
            seed: cfg.sweep.seed,
            round,
        };
        match run_round(&global, &clients, strategy, &ctx, &mut momentum) {
            Ok((next_global, metrics)) => {
                let improved = record
                    .best_accuracy
                    .map_or(true, |best| metrics.accuracy > best);
                if improved {
                    record.best_round = Some(round);
                    record.best_accuracy = Some(metrics.accuracy);
                    if let Some(path) = &checkpoint_path {
                        write_checkpoint(path, &next_global)?;
                        record.checkpoint = Some(path.clone());
                    }
                }
                if let Some(csv) = csv.as_mut() {
                    csv.write_row(&metrics)?;
                }
                record.rounds.push(metrics);
                global = next_global;
            }
            Err(err @ Error::TrainingDiverged { .. }) => {
                record.error = Some(format!("round {round}: {err}"));
                break;
            }
            Err(other) => return Err(other),
        }
    }
    record.duration_secs = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Builds the run's data layout from the config: a CSV pool when given,
/// otherwise synthetic clusters sized to cover shards plus both holdouts.
pub fn build_data(cfg: &ExperimentConfig) -> Result<DataLayout> {
    let needed: usize = cfg.data.client_sizes.iter().sum::<usize>()
        + cfg.data.eval_size
        + cfg.data.validation_size;
    let pool = match &cfg.data.csv_path {
        Some(path) => {
            let examples = load_csv(Path::new(path))?;
            for e in &examples {
                if e.features.len() != cfg.model.input_dim {
                    return Err(Error::LengthMismatch {
                        left: e.features.len(),
                        right: cfg.model.input_dim,
                    });
                }
                if e.label >= cfg.model.num_classes {
                    return Err(Error::Dataset(format!(
                        "label {} out of range for {} classes",
                        e.label, cfg.model.num_classes
                    )));
                }
            }
            examples
        }
        None => generate_synthetic(
            needed,
            cfg.model.input_dim,
            cfg.model.num_classes,
            derive_seed(cfg.sweep.seed, STREAM_DATA, 0),
        )?,
    };
    build_layout(
        &pool,
        &cfg.data.client_sizes,
        &cfg.data.noise_fractions,
        cfg.model.num_classes,
        cfg.data.eval_size,
        cfg.data.validation_size,
        cfg.sweep.seed,
    )
}

/// Runs the full sweep: every combination crossed with every strategy,
/// writing per-cell CSVs, best-model checkpoints, and `summary.json` to the
/// configured output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let strategies = cfg.parsed_strategies()?;
    let layout = build_data(cfg)?;

    let out_dir = PathBuf::from(&cfg.sweep.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let cells: Vec<(&Vec<usize>, Strategy)> = cfg
        .sweep
        .combinations
        .iter()
        .flat_map(|combo| strategies.iter().map(move |&s| (combo, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .expect("thread pool");
    let records = pool.install(|| {
        cells
            .par_iter()
            .map(|(combo, strategy)| run_cell(cfg, &layout, combo, *strategy, Some(&out_dir)))
            .collect::<Result<Vec<CellRecord>>>()
    })?;

    let record = RunRecord { cells: records };
    output::write_summary(
        &out_dir.join("summary.json"),
        cfg.sweep.seed,
        cfg.sweep.rounds,
        &record,
    )?;
    Ok(record)
}
