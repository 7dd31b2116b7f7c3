//! The seven comparison aggregators: simple average, size-weighted mean,
//! coordinate-wise median, server momentum, personalized blending,
//! Laplace-noised averaging, and quantized averaging.
//!
//! Every aggregator consumes the same round inputs (a list of client
//! reports) and produces a new global parameter vector. Reports are sorted
//! by client id before any accumulation, so results do not depend on
//! arrival order. Rounding, where it appears, is round-half-away-from-zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::dualcrit::{normalize_weights, quantity_factors};
use crate::error::{Error, Result};
use crate::learner::{sorted_by_client, ClientReport};
use crate::params::{weighted_sum, ParameterVector};

/// Names accepted by config files and the CLI, in display order.
pub const STRATEGY_NAMES: [&str; 8] = [
    "simple",
    "weighted",
    "median",
    "momentum",
    "personalized",
    "dp",
    "quantized",
    "dualcrit",
];

/// Aggregation strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Simple,
    Weighted,
    Median,
    Momentum,
    Personalized,
    Dp,
    Quantized,
    DualCrit,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Simple,
        Strategy::Weighted,
        Strategy::Median,
        Strategy::Momentum,
        Strategy::Personalized,
        Strategy::Dp,
        Strategy::Quantized,
        Strategy::DualCrit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Simple => "simple",
            Strategy::Weighted => "weighted",
            Strategy::Median => "median",
            Strategy::Momentum => "momentum",
            Strategy::Personalized => "personalized",
            Strategy::Dp => "dp",
            Strategy::Quantized => "quantized",
            Strategy::DualCrit => "dualcrit",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Strategy::Simple),
            "weighted" => Ok(Strategy::Weighted),
            "median" => Ok(Strategy::Median),
            "momentum" => Ok(Strategy::Momentum),
            "personalized" => Ok(Strategy::Personalized),
            "dp" => Ok(Strategy::Dp),
            "quantized" => Ok(Strategy::Quantized),
            "dualcrit" => Ok(Strategy::DualCrit),
            other => Err(Error::UnknownStrategy {
                name: other.to_string(),
                valid: STRATEGY_NAMES.join(", "),
            }),
        }
    }
}

/// Hyperparameters shared by the baseline aggregators.
#[derive(Debug, Clone)]
pub struct BaselineConfig {
    /// Personalized blend toward the previous global model, in [0, 1].
    pub alpha: f64,
    /// Privacy budget; Laplace noise scale is 1/epsilon.
    pub epsilon: f64,
    /// Quantization bit depth; 2^q_level - 1 uniform steps.
    pub q_level: u32,
    /// Momentum decay, in [0, 1).
    pub beta: f64,
    /// Momentum step size, positive.
    pub eta: f64,
    /// Seed for the Laplace noise stream.
    pub noise_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            epsilon: 1.0,
            q_level: 8,
            beta: 0.9,
            eta: 1.0,
            noise_seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument {
                what: "alpha",
                value: self.alpha,
            });
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument {
                what: "epsilon",
                value: self.epsilon,
            });
        }
        if self.q_level == 0 || self.q_level > 52 {
            return Err(Error::InvalidArgument {
                what: "q_level",
                value: self.q_level as f64,
            });
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument {
                what: "beta",
                value: self.beta,
            });
        }
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::InvalidArgument {
                what: "eta",
                value: self.eta,
            });
        }
        Ok(())
    }
}

/// Server-side momentum carried between rounds; velocity starts at zero.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub velocity: ParameterVector,
    pub beta: f64,
    pub eta: f64,
}

impl MomentumState {
    pub fn new(dim: usize, beta: f64, eta: f64) -> Result<Self> {
        Ok(Self {
            velocity: ParameterVector::new(vec![0.0; dim])?,
            beta,
            eta,
        })
    }
}

fn parameter_refs<'a>(reports: &[&'a ClientReport]) -> Vec<&'a ParameterVector> {
    reports.iter().map(|r| &r.parameters).collect()
}

/// Equal-weight average of all client parameters.
pub fn simple_average(reports: &[ClientReport]) -> Result<ParameterVector> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let ordered = sorted_by_client(reports);
    let weights = vec![1.0 / ordered.len() as f64; ordered.len()];
    weighted_sum(&parameter_refs(&ordered), &weights)
}

/// Average weighted by each client's dataset size.
///
/// Shares the size-normalization path with the dual-criterion pipeline, so
/// the dual-criterion aggregate at full quantity weighting reduces to this
/// function bit-exactly.
pub fn weighted_mean(reports: &[ClientReport]) -> Result<ParameterVector> {
    let ordered = sorted_by_client(reports);
    weighted_sum(&parameter_refs(&ordered), &weighted_mean_weights(&ordered)?)
}

pub(crate) fn weighted_mean_weights(ordered: &[&ClientReport]) -> Result<Vec<f64>> {
    if ordered.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let sizes: Vec<usize> = ordered.iter().map(|r| r.size).collect();
    normalize_weights(&quantity_factors(&sizes)?)
}

/// Coordinate-wise median; even client counts take the mean of the two
/// middle order statistics.
pub fn median_aggregate(reports: &[ClientReport]) -> Result<ParameterVector> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let ordered = sorted_by_client(reports);
    let dim = ordered[0].parameters.len();
    for r in &ordered[1..] {
        if r.parameters.len() != dim {
            return Err(Error::LengthMismatch {
                left: dim,
                right: r.parameters.len(),
            });
        }
    }
    let mut column = Vec::with_capacity(ordered.len());
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        column.clear();
        column.extend(ordered.iter().map(|r| r.parameters.values()[j]));
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite parameters"));
        let mid = column.len() / 2;
        out.push(if column.len() % 2 == 1 {
            column[mid]
        } else {
            (column[mid - 1] + column[mid]) / 2.0
        });
    }
    ParameterVector::new(out)
}

/// Momentum update: `velocity' = beta * velocity + (weighted_mean - prev)`,
/// `global' = prev + eta * velocity'`.
pub fn momentum_aggregate(
    reports: &[ClientReport],
    prev_global: &ParameterVector,
    state: &MomentumState,
) -> Result<(ParameterVector, MomentumState)> {
    if state.velocity.len() != prev_global.len() {
        return Err(Error::LengthMismatch {
            left: state.velocity.len(),
            right: prev_global.len(),
        });
    }
    let mean = weighted_mean(reports)?;
    let delta = mean.sub(prev_global)?;
    let velocity = if state.beta == 0.0 {
        delta
    } else {
        state.velocity.scale(state.beta)?.add(&delta)?
    };
    // With beta = 0 and eta = 1 the recurrence collapses to the weighted
    // mean; computed directly so the identity is exact.
    let global = if state.beta == 0.0 && state.eta == 1.0 {
        mean
    } else {
        prev_global.add(&velocity.scale(state.eta)?)?
    };
    Ok((
        global,
        MomentumState {
            velocity,
            beta: state.beta,
            eta: state.eta,
        },
    ))
}

/// Blend of the previous global model and the plain client average:
/// `alpha * prev + (1 - alpha) * simple_average`.
pub fn personalized_aggregate(
    reports: &[ClientReport],
    prev_global: &ParameterVector,
    alpha: f64,
) -> Result<ParameterVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument {
            what: "alpha",
            value: alpha,
        });
    }
    // Endpoints are exact by construction.
    if alpha == 1.0 {
        if reports.is_empty() {
            return Err(Error::EmptyInput("reports"));
        }
        return Ok(prev_global.clone());
    }
    let mean = simple_average(reports)?;
    if alpha == 0.0 {
        return Ok(mean);
    }
    prev_global.scale(alpha)?.add(&mean.scale(1.0 - alpha)?)
}

/// Simple average plus i.i.d. Laplace(0, 1/epsilon) noise per coordinate,
/// drawn deterministically from `noise_seed`.
pub fn dp_average(
    reports: &[ClientReport],
    epsilon: f64,
    noise_seed: u64,
) -> Result<ParameterVector> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "epsilon",
            value: epsilon,
        });
    }
    let mean = simple_average(reports)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    // Laplace(0, b) as the difference of two Exp(1/b) draws.
    let exp = Exp::new(epsilon).expect("positive rate");
    let values = mean
        .values()
        .iter()
        .map(|v| v + exp.sample(&mut rng) - exp.sample(&mut rng))
        .collect();
    ParameterVector::new(values)
}

/// Quantizes one vector to `2^q_level - 1` uniform steps over its own
/// [min, max] range. Degenerate (constant) vectors pass through unchanged;
/// range endpoints are reproduced exactly.
pub fn quantize_vector(params: &ParameterVector, q_level: u32) -> Result<ParameterVector> {
    if q_level == 0 || q_level > 52 {
        return Err(Error::InvalidArgument {
            what: "q_level",
            value: q_level as f64,
        });
    }
    let values = params.values();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(params.clone());
    }
    let levels = ((1u64 << q_level) - 1) as f64;
    let range = max - min;
    let quantized = values
        .iter()
        .map(|&x| {
            let step = (((x - min) / range) * levels).round();
            if step <= 0.0 {
                min
            } else if step >= levels {
                max
            } else {
                min + (step / levels) * range
            }
        })
        .collect();
    ParameterVector::new(quantized)
}

/// Quantizes each client's parameters, then takes the simple average.
pub fn quantize_aggregate(reports: &[ClientReport], q_level: u32) -> Result<ParameterVector> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let ordered = sorted_by_client(reports);
    let quantized = ordered
        .iter()
        .map(|r| quantize_vector(&r.parameters, q_level))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ParameterVector> = quantized.iter().collect();
    let weights = vec![1.0 / refs.len() as f64; refs.len()];
    weighted_sum(&refs, &weights)
}
