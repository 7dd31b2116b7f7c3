//! Federated-learning simulator built around dual-criterion weighted model
//! aggregation: per-client weights that blend data quantity (dataset size)
//! with data quality (held-out evaluation accuracy), with the blend
//! coefficient tuned per round on a server-side validation set.
//!
//! The crate ships the weight pipeline itself ([`dualcrit`]), seven baseline
//! aggregators to compare against ([`baselines`]), a small deterministic
//! local learner ([`learner`]), synthetic non-IID data tooling ([`data`]),
//! classification metrics ([`metrics`]), and the round/sweep orchestration
//! plus a CLI ([`orchestrator`]).
//!
//! All randomness is seeded and all aggregation runs in a canonical client
//! order, so entire experiment sweeps are reproducible byte for byte.

pub mod baselines;
pub mod data;
pub mod dualcrit;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod orchestrator;
pub mod params;

pub use error::{Error, Result};
