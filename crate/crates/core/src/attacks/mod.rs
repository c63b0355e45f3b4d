//! Membership inference attacks.
//!
//! Every attack maps a labeled record `(x, y)` to a confidence in `[0, 1]`
//! that the record was in the target's training set. The default decision is
//! `confidence > 1/2`.

mod deep;
mod displacement;
mod general;
mod linear;
mod meta;
mod shadow;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::nn::Network;
use crate::{Provenance, Result};

pub use deep::{bayes_wb_deep, train_head_proxies, DeepBayesWb};
pub use displacement::DisplacementNet;
pub use general::{general_wb_train, GeneralWb, GeneralWbConfig};
pub use linear::{bayes_wb_linear, bayes_wb_from_models, mi_confidence, omniscient_model, LinearMiModel};
pub use meta::{meta_train, MetaAttack, MetaConfig};
pub use shadow::{shadow_bb_train, ShadowAttack, ShadowConfig};

/// How proxies are sampled from the attacker's data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub count: usize,
    /// Sample size; `None` uses the size of the data being sampled.
    pub sample_size: Option<usize>,
    /// Bootstrap (with replacement) or draw distinct records.
    pub replacement: bool,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            count: 10,
            sample_size: None,
            replacement: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackPrediction {
    pub confidence: f64,
    pub decision: bool,
}

pub trait MembershipAttack: Send + Sync {
    /// Membership confidence for record `x` with label `y`.
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64>;

    /// Decision against the default threshold 1/2 (strict).
    fn predict(&self, x: &[f64], y: usize) -> Result<AttackPrediction> {
        let confidence = self.confidence(x, y)?;
        Ok(AttackPrediction {
            confidence,
            decision: confidence > 0.5,
        })
    }

    /// Confidences for every record of `data`.
    fn confidences(&self, data: &LabeledDataset) -> Result<Vec<f64>> {
        data.iter().map(|(x, y)| self.confidence(x, y)).collect()
    }
}

/// Predicts membership iff the target classifies the record correctly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveAttack {
    pub target: Network,
}

impl MembershipAttack for NaiveAttack {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        Ok(if self.target.predict_class(x)? == y { 1.0 } else { 0.0 })
    }
}

pub fn naive_predict(target: &Network, x: &[f64], y: usize) -> Result<AttackPrediction> {
    NaiveAttack { target: target.clone() }.predict(x, y)
}

/// Any built attack, in a form that can be persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackModel {
    Naive(NaiveAttack),
    Omniscient(LinearMiModel),
    BayesWb(LinearMiModel),
    BayesWbDeep(DeepBayesWb),
    GeneralWb(GeneralWb),
    Meta(MetaAttack),
    ShadowBb(ShadowAttack),
}

impl AttackModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AttackModel::Naive(_) => "naive",
            AttackModel::Omniscient(_) => "omniscient",
            AttackModel::BayesWb(_) => "bayes_wb",
            AttackModel::BayesWbDeep(_) => "bayes_wb_deep",
            AttackModel::GeneralWb(_) => "general_wb",
            AttackModel::Meta(_) => "meta",
            AttackModel::ShadowBb(_) => "shadow_bb",
        }
    }

    fn inner(&self) -> &dyn MembershipAttack {
        match self {
            AttackModel::Naive(a) => a,
            AttackModel::Omniscient(a) | AttackModel::BayesWb(a) => a,
            AttackModel::BayesWbDeep(a) => a,
            AttackModel::GeneralWb(a) => a,
            AttackModel::Meta(a) => a,
            AttackModel::ShadowBb(a) => a,
        }
    }
}

impl MembershipAttack for AttackModel {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        self.inner().confidence(x, y)
    }
}

pub const ATTACK_FORMAT_VERSION: u32 = 1;

/// Persisted attack: the model, free-form build parameters (seeds, split
/// spec, proxy count) and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackDocument {
    pub version: u32,
    pub attack: AttackModel,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl AttackDocument {
    pub fn new(attack: AttackModel, parameters: serde_json::Value, provenance: Option<Provenance>) -> Self {
        Self {
            version: ATTACK_FORMAT_VERSION,
            attack,
            parameters,
            provenance,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.version != ATTACK_FORMAT_VERSION {
            return Err(crate::Error::contract(format!(
                "unsupported attack format version {}",
                doc.version
            )));
        }
        Ok(doc)
    }
}
