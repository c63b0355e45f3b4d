use serde::{Deserialize, Serialize};

use super::{MembershipAttack, ProxyConfig};
use crate::data::{bootstrap_sample, subsample, LabeledDataset};
use crate::influence::{head_influence, Slice};
use crate::nn::{logits_of, DenseLayer, Network};
use crate::target::TargetSpec;
use crate::{seed, sigmoid, Error, Result};

/// Trains `config.count` copies of the head `target.top(slice)` on bootstrap
/// samples of `data` mapped through the target's own feature extractor.
pub fn train_head_proxies(
    spec: &TargetSpec,
    target: &Network,
    slice: Slice,
    data: &LabeledDataset,
    config: &ProxyConfig,
    seed: u64,
) -> Result<Vec<Network>> {
    Slice::new(target, slice.layer_index)?;
    if config.count == 0 {
        return Err(Error::contract("proxy count must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::contract("cannot train proxies on empty data"));
    }
    let features = if slice.layer_index == 0 {
        data.clone()
    } else {
        data.map_features(|x| target.features_at(slice.layer_index, x))?
    };
    let size = config.sample_size.unwrap_or(features.len());
    (0..config.count as u64)
        .map(|i| {
            let sample_seed = seed::derive(seed, seed::tag::BOOTSTRAP, i);
            let sample = if config.replacement {
                bootstrap_sample(&features, size, sample_seed)?
            } else {
                subsample(&features, size, sample_seed)?
            };
            spec.train_like(target.top(slice.layer_index), &sample, seed::derive(seed, seed::tag::PROXY, i))
        })
        .collect()
}

/// Trains one copy of the head `model.top(slice)` on all of `data`, mapped
/// through `model`'s feature extractor.
pub(crate) fn train_head(
    spec: &TargetSpec,
    model: &Network,
    slice: Slice,
    data: &LabeledDataset,
    seed: u64,
) -> Result<Network> {
    let features = if slice.layer_index == 0 {
        data.clone()
    } else {
        data.map_features(|x| model.features_at(slice.layer_index, x))?
    };
    spec.train_like(model.top(slice.layer_index), &features, seed)
}

/// Per-class influence column `y` of a head at `z`, and its pre-softmax
/// output at the zero baseline.
pub(crate) fn head_terms(head: &[DenseLayer], z: &[f64], y: usize, steps: usize) -> Result<(Vec<f64>, f64)> {
    let chi = head_influence(head, z, steps)?;
    if y >= chi.cols() {
        return Err(Error::contract(format!("class {y} out of range")));
    }
    let bias = logits_of(head, &vec![0.0; z.len()])?[y];
    Ok((chi.column(y), bias))
}

/// Bayes-wb attack on one slice of a deep target, using the influence of the
/// slice's head in place of linear weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepBayesWb {
    pub target: Network,
    pub slice: Slice,
    /// Proxy heads, shaped like `target.top(slice)`.
    pub proxies: Vec<Network>,
    pub steps: usize,
}

impl DeepBayesWb {
    pub fn new(target: Network, slice: Slice, proxies: Vec<Network>, steps: usize) -> Result<Self> {
        Slice::new(&target, slice.layer_index)?;
        if proxies.is_empty() {
            return Err(Error::contract("at least one proxy is required"));
        }
        let head = target.top(slice.layer_index);
        for p in &proxies {
            if p.layer_count() != head.len() || p.input_dim() != head[0].input_dim() || p.output_dim() != target.output_dim()
            {
                return Err(Error::contract("proxy head shape differs from the target head"));
            }
        }
        if steps == 0 {
            return Err(Error::contract("influence needs at least one quadrature step"));
        }
        Ok(Self {
            target,
            slice,
            proxies,
            steps,
        })
    }

    /// `w^yᵀz + b^y` at `z = ĥ(x)`.
    pub fn logit(&self, x: &[f64], y: usize) -> Result<f64> {
        let z = self.slice.features(&self.target, x)?;
        let (mut w, mut b) = head_terms(self.slice.head(&self.target), &z, y, self.steps)?;
        let mut w_sum = vec![0.0; w.len()];
        let mut b_sum = 0.0;
        for p in &self.proxies {
            let (pw, pb) = head_terms(p.layers(), &z, y, self.steps)?;
            for (s, v) in w_sum.iter_mut().zip(pw) {
                *s += v;
            }
            b_sum += pb;
        }
        let n = self.proxies.len() as f64;
        for (o, s) in w.iter_mut().zip(&w_sum) {
            *o -= s / n;
        }
        b -= b_sum / n;
        Ok(w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b)
    }
}

impl MembershipAttack for DeepBayesWb {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        self.logit(x, y).map(sigmoid)
    }
}

pub fn bayes_wb_deep(
    target: &Network,
    slice: Slice,
    holdout: &LabeledDataset,
    proxies: &ProxyConfig,
    spec: &TargetSpec,
    steps: usize,
    seed: u64,
) -> Result<DeepBayesWb> {
    let heads = train_head_proxies(spec, target, slice, holdout, proxies, seed)?;
    DeepBayesWb::new(target.clone(), slice, heads, steps)
}
