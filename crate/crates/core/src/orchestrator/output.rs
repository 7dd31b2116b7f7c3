//! Result files: one metrics CSV per (combination, strategy) cell, a
//! `summary.json` across all cells, and binary model checkpoints.
//!
//! CSV and checkpoint bytes are pure functions of the experiment config, so
//! reruns produce identical files; `summary.json` additionally carries
//! wall-clock durations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::orchestrator::{CellRecord, RoundMetrics, RunRecord};

/// Directory-friendly label for a client combination: `c0-c1-c2`.
pub fn combination_label(combination: &[usize]) -> String {
    let parts: Vec<String> = combination.iter().map(|id| format!("c{id}")).collect();
    parts.join("-")
}

/// `metrics_<comb>_<strategy>.csv` file name.
pub fn metrics_file_name(combination: &[usize], strategy: &str) -> String {
    format!("metrics_{}_{}.csv", combination_label(combination), strategy)
}

/// `checkpoint_<comb>_<strategy>.bin` file name.
pub fn checkpoint_file_name(combination: &[usize], strategy: &str) -> String {
    format!(
        "checkpoint_{}_{}.bin",
        combination_label(combination),
        strategy
    )
}

/// Incremental CSV writer for one cell; one row per round, flushed as
/// written so partial results survive an aborted run.
pub struct MetricsCsv {
    writer: BufWriter<File>,
    path: PathBuf,
    num_clients: usize,
}

impl MetricsCsv {
    /// Creates the file and writes the header. Weight columns are named by
    /// client id in canonical order.
    pub fn create(path: &Path, combination: &[usize]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut writer = BufWriter::new(file);
        let mut ids: Vec<usize> = combination.to_vec();
        ids.sort_unstable();
        let mut header = String::from("round,accuracy,precision,f1,mcc,lambda_chosen");
        for id in &ids {
            header.push_str(&format!(",w_c{id}"));
        }
        header.push('\n');
        writer
            .write_all(header.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(Self {
            writer,
            path: path.to_path_buf(),
            num_clients: ids.len(),
        })
    }

    pub fn write_row(&mut self, row: &RoundMetrics) -> Result<()> {
        let mut line = format!(
            "{},{},{},{},{}",
            row.round, row.accuracy, row.precision, row.f1, row.mcc
        );
        match row.lambda_chosen {
            Some(lambda) => line.push_str(&format!(",{lambda}")),
            None => line.push(','),
        }
        match &row.weights {
            Some(weights) => {
                debug_assert_eq!(weights.len(), self.num_clients);
                for w in weights {
                    line.push_str(&format!(",{w}"));
                }
            }
            None => {
                for _ in 0..self.num_clients {
                    line.push(',');
                }
            }
        }
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .map_err(|e| Error::io(self.path.display().to_string(), e))?;
        self.writer
            .flush()
            .map_err(|e| Error::io(self.path.display().to_string(), e))
    }
}

#[derive(Serialize)]
struct SummaryCell<'a> {
    combination: String,
    strategy: &'a str,
    rounds_completed: usize,
    best_round: Option<usize>,
    accuracy: Option<f64>,
    precision: Option<f64>,
    f1: Option<f64>,
    mcc: Option<f64>,
    checkpoint: Option<String>,
    duration_secs: f64,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    rounds: usize,
    cells: Vec<SummaryCell<'a>>,
}

fn summary_cell(cell: &CellRecord) -> SummaryCell<'_> {
    let best = cell
        .best_round
        .and_then(|round| cell.rounds.iter().find(|r| r.round == round));
    SummaryCell {
        combination: combination_label(&cell.combination),
        strategy: cell.strategy.as_str(),
        rounds_completed: cell.rounds.len(),
        best_round: cell.best_round,
        accuracy: best.map(|r| r.accuracy),
        precision: best.map(|r| r.precision),
        f1: best.map(|r| r.f1),
        mcc: best.map(|r| r.mcc),
        checkpoint: cell
            .checkpoint
            .as_ref()
            .map(|p| p.display().to_string()),
        duration_secs: cell.duration_secs,
        error: cell.error.as_deref(),
    }
}

/// Writes `summary.json`: the four validation metrics of the best saved
/// model of every cell, plus bookkeeping.
pub fn write_summary(path: &Path, seed: u64, rounds: usize, record: &RunRecord) -> Result<()> {
    let summary = Summary {
        seed,
        rounds,
        cells: record.cells.iter().map(summary_cell).collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
