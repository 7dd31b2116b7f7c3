//! Dual-criterion weighted aggregation: per-client weights blending a
//! quantity factor (normalized dataset size) with a quality factor
//! (normalized evaluation score), plus the server-side search for the blend
//! coefficient lambda.
//!
//! The weight pipeline is
//!
//! ```text
//! v_i = size_i / sum(sizes)            quantity factor
//! q_i = score_i / sum(scores)          quality factor
//! f_i = lambda * q_i + (1 - lambda) * v_i
//! w_i = f_i / sum(f)                   final weight
//! global = sum_i w_i * params_i
//! ```
//!
//! At `lambda = 0` the pipeline reduces bit-exactly to the size-weighted
//! mean, and at `lambda = 1` the weights equal the quality factors. Lambda
//! itself is chosen per round by aggregating once per grid value and keeping
//! the candidate with the highest validation accuracy (ties go to the
//! smallest lambda, the quantity-weighted end).

use crate::data::Example;
use crate::error::{Error, Result};
use crate::learner::{evaluate_score, sorted_by_client, ClientReport, ModelSpec};
use crate::params::{weighted_sum, ParameterVector};

/// Quantity factors: each client's dataset size over the total.
///
/// The total is summed in integer arithmetic, so equal sizes normalize to
/// exactly 1/N.
pub fn quantity_factors(sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("sizes"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument {
            what: "size",
            value: 0.0,
        });
    }
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    let total = total as f64;
    Ok(sizes.iter().map(|&s| s as f64 / total).collect())
}

/// Quality factors: each client's score over the total score.
///
/// All-equal scores normalize to exactly 1/N. An all-zero score list is a
/// degenerate-quality signal the caller must handle.
pub fn quality_factors(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidArgument {
            what: "score",
            value: *scores.iter().find(|s| !s.is_finite() || **s < 0.0).unwrap(),
        });
    }
    if scores.iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateQuality);
    }
    if scores.windows(2).all(|w| w[0] == w[1]) {
        return Ok(vec![1.0 / scores.len() as f64; scores.len()]);
    }
    let total: f64 = scores.iter().sum();
    Ok(scores.iter().map(|&s| s / total).collect())
}

/// Blends quality into quantity: `f_i = lambda * q_i + (1 - lambda) * v_i`.
pub fn blend(quality: &[f64], quantity: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument {
            what: "lambda",
            value: lambda,
        });
    }
    if quality.len() != quantity.len() {
        return Err(Error::LengthMismatch {
            left: quality.len(),
            right: quantity.len(),
        });
    }
    Ok(quality
        .iter()
        .zip(quantity)
        .map(|(&q, &v)| lambda * q + (1.0 - lambda) * v)
        .collect())
}

/// Safety normalization `w_i = f_i / sum(f)`; an identity whenever the
/// factors already sum to one.
///
/// All-equal factors normalize to exactly 1/N, so uniform inputs cannot
/// drift off the uniform weight by a rounding step.
pub fn normalize_weights(factors: &[f64]) -> Result<Vec<f64>> {
    if factors.is_empty() {
        return Err(Error::EmptyInput("factors"));
    }
    if factors.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::NonFinite("weight factors"));
    }
    let total: f64 = factors.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "factor sum",
            value: total,
        });
    }
    if factors.windows(2).all(|w| w[0] == w[1]) {
        return Ok(vec![1.0 / factors.len() as f64; factors.len()]);
    }
    Ok(factors.iter().map(|&f| f / total).collect())
}

/// The full weight pipeline of one round, kept for logging and inspection.
#[derive(Debug, Clone)]
pub struct DualWeights {
    /// Quantity factors v, summing to 1.
    pub quantity: Vec<f64>,
    /// Quality factors q, summing to 1.
    pub quality: Vec<f64>,
    pub lambda: f64,
    /// Blended factors f.
    pub blended: Vec<f64>,
    /// Final normalized weights w, summing to 1.
    pub weights: Vec<f64>,
}

impl DualWeights {
    /// Runs the pipeline on raw sizes and scores.
    pub fn compute(sizes: &[usize], scores: &[f64], lambda: f64) -> Result<Self> {
        if sizes.len() != scores.len() {
            return Err(Error::LengthMismatch {
                left: sizes.len(),
                right: scores.len(),
            });
        }
        let quantity = quantity_factors(sizes)?;
        let quality = quality_factors(scores)?;
        let blended = blend(&quality, &quantity, lambda)?;
        let weights = normalize_weights(&blended)?;
        Ok(Self {
            quantity,
            quality,
            lambda,
            blended,
            weights,
        })
    }
}

/// Final weights for the given reports (canonical client order). Falls back
/// to pure quantity weighting when every score is zero.
pub fn dualcrit_weights(reports: &[ClientReport], lambda: f64) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let ordered = sorted_by_client(reports);
    let sizes: Vec<usize> = ordered.iter().map(|r| r.size).collect();
    let scores: Vec<f64> = ordered.iter().map(|r| r.score).collect();
    match DualWeights::compute(&sizes, &scores, lambda) {
        Ok(dw) => Ok(dw.weights),
        Err(Error::DegenerateQuality) => {
            log::warn!("all client scores are zero; falling back to quantity-only weights");
            normalize_weights(&quantity_factors(&sizes)?)
        }
        Err(e) => Err(e),
    }
}

/// Aggregates client parameters with dual-criterion weights at a fixed lambda.
pub fn dualcrit_aggregate(reports: &[ClientReport], lambda: f64) -> Result<ParameterVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument {
            what: "lambda",
            value: lambda,
        });
    }
    let weights = dualcrit_weights(reports, lambda)?;
    let ordered = sorted_by_client(reports);
    let refs: Vec<&ParameterVector> = ordered.iter().map(|r| &r.parameters).collect();
    weighted_sum(&refs, &weights)
}

/// The lambda candidates searched each round.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    /// Validates that values are non-empty, within [0, 1], strictly ascending.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("lambda grid"));
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument {
                    what: "lambda",
                    value: v,
                });
            }
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument {
                what: "lambda grid order",
                value: f64::NAN,
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for LambdaGrid {
    /// {0.0, 0.1, ..., 1.0}.
    fn default() -> Self {
        Self {
            values: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

/// Aggregates once per grid value and returns the lambda (and its model)
/// with the highest validation accuracy; ties keep the smallest lambda.
pub fn select_lambda(
    reports: &[ClientReport],
    grid: &LambdaGrid,
    validation_set: &[Example],
    spec: &ModelSpec,
) -> Result<(f64, ParameterVector)> {
    if validation_set.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let mut best: Option<(f64, ParameterVector, f64)> = None;
    for &lambda in grid.values() {
        let candidate = dualcrit_aggregate(reports, lambda)?;
        let acc = evaluate_score(&candidate, validation_set, spec)?;
        let better = match &best {
            None => true,
            Some((_, _, best_acc)) => acc > *best_acc,
        };
        if better {
            best = Some((lambda, candidate, acc));
        }
    }
    let (lambda, model, _) = best.expect("non-empty grid");
    Ok((lambda, model))
}
