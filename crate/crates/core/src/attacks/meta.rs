use serde::{Deserialize, Serialize};

use super::{bayes_wb_deep, DeepBayesWb, MembershipAttack, ProxyConfig};
use crate::data::{random_halves, LabeledDataset};
use crate::influence::{Slice, DEFAULT_STEPS};
use crate::nn::{train_classifier, Activation, DenseLayer, LossKind, Network, OptimizerConfig, Tensor2};
use crate::target::TargetSpec;
use crate::{seed, Error, Result};

/// Meta model over per-slice logits: `inputs → hidden (ReLU) → 1 (sigmoid)`,
/// or logistic regression when `hidden == 0`. The logistic regression starts
/// at the mean of the slice logits, so a single slice starts as that slice's
/// own attack.
pub(crate) fn build_meta_network(inputs: usize, hidden: usize, seed: u64) -> Result<Network> {
    if hidden == 0 {
        let weights = Tensor2::new(inputs, 1, vec![1.0 / inputs as f64; inputs])?;
        Network::new(vec![DenseLayer::new(weights, vec![0.0], Activation::Sigmoid)?])
    } else {
        Network::random(&[inputs, hidden, 1], &[Activation::Relu, Activation::Sigmoid], seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub splits: usize,
    pub n_m: usize,
    /// Proxies behind each per-slice bayes-wb attack.
    pub proxies: ProxyConfig,
    pub steps: usize,
    #[serde(deserialize_with = "crate::nn::deserialize_adam_default")]
    pub optimizer: OptimizerConfig,
    /// Slice indices to combine; `None` uses every slice.
    pub slices: Option<Vec<usize>>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            splits: 10,
            n_m: 16,
            proxies: ProxyConfig::default(),
            steps: DEFAULT_STEPS,
            optimizer: OptimizerConfig::adam(),
            slices: None,
        }
    }
}

/// Per-slice bayes-wb attacks whose confidences are combined by a small
/// classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaAttack {
    pub attacks: Vec<DeepBayesWb>,
    pub meta: Network,
}

impl MetaAttack {
    pub fn slice_confidences(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.attacks.iter().map(|a| a.confidence(x, y)).collect()
    }

    /// Meta model input: one attack logit per slice.
    pub fn slice_logits(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.attacks.iter().map(|a| a.logit(x, y)).collect()
    }
}

impl MembershipAttack for MetaAttack {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        Ok(self.meta.forward(&self.slice_logits(x, y)?)?[0])
    }
}

fn slice_attacks(
    spec: &TargetSpec,
    model: &Network,
    data: &LabeledDataset,
    slices: &[Slice],
    config: &MetaConfig,
    seed: u64,
) -> Result<Vec<DeepBayesWb>> {
    slices
        .iter()
        .map(|&s| {
            let s_seed = seed::derive(seed, seed::tag::PROXY, s.layer_index as u64);
            bayes_wb_deep(model, s, data, &config.proxies, spec, config.steps, s_seed)
        })
        .collect()
}

/// Learns how to combine per-slice bayes-wb attacks.
///
/// Each split trains a shadow on one half of the holdout and builds the
/// per-slice attacks against it from the other half; the meta model learns
/// to separate the two halves from their per-slice logits. The final
/// per-slice attacks target `target` with proxies drawn from all of
/// `holdout`.
pub fn meta_train(
    spec: &TargetSpec,
    target: &Network,
    holdout: &LabeledDataset,
    config: &MetaConfig,
    seed: u64,
) -> Result<MetaAttack> {
    if config.splits == 0 {
        return Err(Error::contract("meta training needs at least one split"));
    }
    let slices: Vec<Slice> = match &config.slices {
        None => Slice::all(target),
        Some(list) if list.is_empty() => return Err(Error::contract("at least one slice is required")),
        Some(list) => list.iter().map(|&l| Slice::new(target, l)).collect::<Result<_>>()?,
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..config.splits as u64 {
        let split_seed = seed::derive(seed, seed::tag::ATTACK, i);
        let (inside, outside) = random_halves(holdout, seed::derive(split_seed, seed::tag::HALVES, 0))?;
        let shadow = spec.train_like(target.layers(), &inside, seed::derive(split_seed, seed::tag::SHADOW, 0))?;
        let attacks = slice_attacks(spec, &shadow, &outside, &slices, config, split_seed)?;
        for (data, label) in [(&inside, 1), (&outside, 0)] {
            for (x, y) in data.iter() {
                rows.push(attacks.iter().map(|a| a.logit(x, y)).collect::<Result<Vec<_>>>()?);
                labels.push(label);
            }
        }
    }
    let inputs = Tensor2::from_rows(&rows)?;
    let net = build_meta_network(slices.len(), config.n_m, seed::derive(seed, seed::tag::META, 0))?;
    let opt = config.optimizer.with_seed(seed::derive(seed, seed::tag::META, 1));
    let meta = train_classifier(net, &inputs, &labels, &opt, LossKind::BinaryCrossEntropy)?.network;
    let attacks = slice_attacks(spec, target, holdout, &slices, config, seed)?;
    Ok(MetaAttack { attacks, meta })
}
