//! Experiment configuration: a TOML file with five sections (`model`,
//! `train`, `data`, `sweep`, `strategies`). Every field has a default;
//! `--print-default-config` emits the full schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, Strategy};
use crate::dualcrit::LambdaGrid;
use crate::error::{Error, Result};
use crate::learner::ModelSpec;

/// How multiclass precision and F1 are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Macro,
    Micro,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Test mode: give every client the same per-round training seed, so
    /// identical shards produce identical reports.
    #[serde(default)]
    pub shared_client_seed: bool,
}

fn default_learning_rate() -> f64 {
    0.05
}
fn default_local_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    32
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: default_learning_rate(),
            local_epochs: default_local_epochs(),
            batch_size: default_batch_size(),
            shared_client_seed: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default = "default_client_sizes")]
    pub client_sizes: Vec<usize>,
    /// Label-noise fraction per client, parallel to `client_sizes`.
    #[serde(default = "default_noise_fractions")]
    pub noise_fractions: Vec<f64>,
    #[serde(default = "default_holdout_size")]
    pub eval_size: usize,
    #[serde(default = "default_holdout_size")]
    pub validation_size: usize,
    /// Optional CSV source (feature columns then an integer label column,
    /// header row required) used instead of synthetic generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
}

fn default_client_sizes() -> Vec<usize> {
    vec![400, 400, 400, 400]
}
fn default_noise_fractions() -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.4]
}
fn default_holdout_size() -> usize {
    600
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            client_sizes: default_client_sizes(),
            noise_fractions: default_noise_fractions(),
            eval_size: default_holdout_size(),
            validation_size: default_holdout_size(),
            csv_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Client-id subsets to run, one cell per (combination, strategy) pair.
    #[serde(default = "default_combinations")]
    pub combinations: Vec<Vec<usize>>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// "macro" or "micro" averaging for precision and F1.
    #[serde(default = "default_metric_averaging")]
    pub metric_averaging: String,
}

fn default_rounds() -> usize {
    30
}
fn default_combinations() -> Vec<Vec<usize>> {
    vec![vec![0, 1, 2], vec![0, 1, 2, 3]]
}
fn default_strategies() -> Vec<String> {
    crate::baselines::STRATEGY_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_seed() -> u64 {
    42
}
fn default_out_dir() -> String {
    "results".to_string()
}
fn default_workers() -> usize {
    1
}
fn default_metric_averaging() -> String {
    "macro".to_string()
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            rounds: default_rounds(),
            combinations: default_combinations(),
            strategies: default_strategies(),
            seed: default_seed(),
            out_dir: default_out_dir(),
            workers: default_workers(),
            metric_averaging: default_metric_averaging(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_q_level")]
    pub q_level: u32,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Seed for the Laplace noise stream; the sweep seed when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
}

fn default_alpha() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_q_level() -> u32 {
    8
}
fn default_beta() -> f64 {
    0.9
}
fn default_eta() -> f64 {
    1.0
}
fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            epsilon: default_epsilon(),
            q_level: default_q_level(),
            beta: default_beta(),
            eta: default_eta(),
            noise_seed: None,
            lambda_grid: default_lambda_grid(),
        }
    }
}

fn default_model() -> ModelSpec {
    ModelSpec {
        input_dim: 2,
        hidden_dims: vec![16],
        num_classes: 3,
    }
}

/// The whole experiment: model, training, data layout, sweep shape, and
/// strategy hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub train: TrainSection,
    pub data: DataSection,
    pub sweep: SweepSection,
    pub strategies: StrategySection,
}

impl Default for ModelSpec {
    fn default() -> Self {
        default_model()
    }
}

impl ExperimentConfig {
    /// Loads and validates a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// The default config rendered as TOML.
    pub fn default_toml() -> String {
        toml::to_string_pretty(&ExperimentConfig::default()).expect("default config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.data.client_sizes.is_empty() {
            return Err(Error::EmptyInput("data.client_sizes"));
        }
        if self.data.client_sizes.len() != self.data.noise_fractions.len() {
            return Err(Error::LengthMismatch {
                left: self.data.client_sizes.len(),
                right: self.data.noise_fractions.len(),
            });
        }
        for &f in &self.data.noise_fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidArgument {
                    what: "noise fraction",
                    value: f,
                });
            }
        }
        if self.data.eval_size == 0 || self.data.validation_size == 0 {
            return Err(Error::EmptyInput("data.eval_size / data.validation_size"));
        }
        if self.sweep.rounds == 0 {
            return Err(Error::InvalidArgument {
                what: "sweep.rounds",
                value: 0.0,
            });
        }
        if self.sweep.workers == 0 {
            return Err(Error::InvalidArgument {
                what: "sweep.workers",
                value: 0.0,
            });
        }
        if self.sweep.combinations.is_empty() {
            return Err(Error::EmptyInput("sweep.combinations"));
        }
        let num_clients = self.data.client_sizes.len();
        for combo in &self.sweep.combinations {
            if combo.is_empty() {
                return Err(Error::EmptyInput("sweep combination"));
            }
            let mut seen = std::collections::HashSet::new();
            for &id in combo {
                if id >= num_clients {
                    return Err(Error::InvalidArgument {
                        what: "combination client id",
                        value: id as f64,
                    });
                }
                if !seen.insert(id) {
                    return Err(Error::InvalidArgument {
                        what: "duplicate client id in combination",
                        value: id as f64,
                    });
                }
            }
        }
        if self.sweep.strategies.is_empty() {
            return Err(Error::EmptyInput("sweep.strategies"));
        }
        self.parsed_strategies()?;
        self.averaging()?;
        self.lambda_grid()?;
        self.baseline_config().validate()?;
        let train = crate::learner::TrainConfig {
            learning_rate: self.train.learning_rate,
            local_epochs: self.train.local_epochs,
            batch_size: self.train.batch_size,
            seed: 0,
        };
        train.validate()?;
        Ok(())
    }

    pub fn parsed_strategies(&self) -> Result<Vec<Strategy>> {
        self.sweep
            .strategies
            .iter()
            .map(|s| s.parse::<Strategy>())
            .collect()
    }

    pub fn averaging(&self) -> Result<Averaging> {
        match self.sweep.metric_averaging.as_str() {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(Error::Config {
                path: String::new(),
                reason: format!("metric_averaging must be \"macro\" or \"micro\", got \"{other}\""),
            }),
        }
    }

    pub fn lambda_grid(&self) -> Result<LambdaGrid> {
        LambdaGrid::new(self.strategies.lambda_grid.clone())
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            alpha: self.strategies.alpha,
            epsilon: self.strategies.epsilon,
            q_level: self.strategies.q_level,
            beta: self.strategies.beta,
            eta: self.strategies.eta,
            noise_seed: self.strategies.noise_seed.unwrap_or(self.sweep.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let text = ExperimentConfig::default_toml();
        let cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sweep.rounds, 30);
        assert_eq!(cfg.data.client_sizes, vec![400; 4]);
        assert_eq!(cfg.strategies.lambda_grid.len(), 11);
        assert_eq!(cfg.parsed_strategies().unwrap().len(), 8);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg: ExperimentConfig = toml::from_str("[sweep]\nrounds = 3\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sweep.rounds, 3);
        assert_eq!(cfg.train.batch_size, 32);
    }

    #[test]
    fn rejects_bad_combination_ids() {
        let cfg: ExperimentConfig = toml::from_str(
            "[sweep]\ncombinations = [[0, 9]]\n",
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unknown_strategy_name() {
        let cfg: ExperimentConfig =
            toml::from_str("[sweep]\nstrategies = [\"krum\"]\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("dualcrit"));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<ExperimentConfig>("[sweep]\nrouns = 3\n").is_err());
    }

    #[test]
    fn load_reports_missing_path() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.toml"));
    }
}
