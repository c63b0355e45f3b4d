//! White-box membership inference attacks against small classifiers.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense feed-forward networks, exact reverse-mode gradients and the
//!   two optimizers used to train targets and attack models.
//! - [`data`]: Gaussian naive-Bayes generation and estimation, splitting,
//!   bootstrap sampling and CSV ingestion.
//! - [`target`]: the target/proxy/shadow training recipe and the closed-form
//!   GNB-optimal linear model.
//! - [`influence`]: internal influence over network slices and the local linear
//!   approximation used by the deep attacks.
//! - [`attacks`]: naive, omniscient, bayes-wb, general-wb, meta and shadow-bb
//!   attacks.
//! - [`eval`]: threshold calibration, metrics and the repeated experiment
//!   protocol.

pub mod attacks;
pub mod data;
pub mod eval;
pub mod influence;
pub mod nn;
pub mod seed;
pub mod target;

mod error;

pub use error::{Error, Result};

/// Logistic function `1 / (1 + e^-x)`, evaluated without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Where a persisted artifact came from.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}
