use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::deep::{head_terms, train_head};
use super::meta::build_meta_network;
use super::{DisplacementNet, MembershipAttack};
use crate::data::{random_halves, LabeledDataset};
use crate::influence::{Slice, DEFAULT_STEPS};
use crate::nn::{LossSpec, Network, Optimizer, OptimizerConfig};
use crate::target::TargetSpec;
use crate::{seed, sigmoid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralWbConfig {
    /// Number of in/out splits of the holdout used to build training tuples.
    pub splits: usize,
    /// Hidden width of each displacement net; 0 is the affine minimum.
    pub n_d: usize,
    /// Hidden width of the meta model combining slices (multi-slice only).
    pub n_m: usize,
    #[serde(deserialize_with = "crate::nn::deserialize_adam_default")]
    pub optimizer: OptimizerConfig,
    /// Quadrature steps for influence on nonlinear heads.
    pub steps: usize,
    /// Slice indices to attack; `None` attacks every slice.
    pub slices: Option<Vec<usize>>,
}

impl Default for GeneralWbConfig {
    fn default() -> Self {
        Self {
            splits: 10,
            n_d: 0,
            n_m: 16,
            optimizer: OptimizerConfig::adam(),
            steps: DEFAULT_STEPS,
            slices: None,
        }
    }
}

impl GeneralWbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::contract("general-wb needs at least one split"));
        }
        if self.steps == 0 {
            return Err(Error::contract("influence needs at least one quadrature step"));
        }
        self.optimizer.validate()
    }

    pub(crate) fn resolve_slices(&self, target: &Network) -> Result<Vec<Slice>> {
        match &self.slices {
            None => Ok(Slice::all(target)),
            Some(list) if list.is_empty() => Err(Error::contract("slice list is empty")),
            Some(list) => list.iter().map(|&l| Slice::new(target, l)).collect(),
        }
    }
}

/// Target-side and proxy-side terms of one record on one slice.
#[derive(Debug, Clone)]
struct SliceTuple {
    target_w: Vec<f64>,
    proxy_w: Vec<f64>,
    target_b: f64,
    proxy_b: f64,
    z: Vec<f64>,
}

impl SliceTuple {
    fn build(model: &Network, proxy_head: &Network, slice: Slice, x: &[f64], y: usize, steps: usize) -> Result<Self> {
        let z = slice.features(model, x)?;
        let (target_w, target_b) = head_terms(slice.head(model), &z, y, steps)?;
        let (proxy_w, proxy_b) = head_terms(proxy_head.layers(), &z, y, steps)?;
        Ok(Self {
            target_w,
            proxy_w,
            target_b,
            proxy_b,
            z,
        })
    }

    fn logit(&self, d: &DisplacementNet) -> f64 {
        d.logit(&self.target_w, &self.proxy_w, self.target_b, self.proxy_b, &self.z)
    }
}

struct Example {
    slices: Vec<SliceTuple>,
    member: bool,
}

/// Learned-displacement attack: per slice,
/// `σ(D(ŵ, w̃)ᵀz + D(b̂, b̃))`, combined across slices by a meta model
/// over the slice logits when more than one slice is attacked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralWb {
    pub target: Network,
    pub slices: Vec<Slice>,
    /// One proxy head per slice, trained on the whole holdout.
    pub proxies: Vec<Network>,
    pub displacements: Vec<DisplacementNet>,
    pub meta: Option<Network>,
    pub steps: usize,
}

impl GeneralWb {
    pub fn slice_logits(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.slices
            .iter()
            .zip(&self.proxies)
            .zip(&self.displacements)
            .map(|((&slice, proxy), d)| {
                SliceTuple::build(&self.target, proxy, slice, x, y, self.steps).map(|t| t.logit(d))
            })
            .collect()
    }
}

impl MembershipAttack for GeneralWb {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        let logits = self.slice_logits(x, y)?;
        match &self.meta {
            None => Ok(sigmoid(logits[0])),
            Some(m) => Ok(m.forward(&logits)?[0]),
        }
    }
}

fn split_examples(
    spec: &TargetSpec,
    template: &Network,
    holdout: &LabeledDataset,
    slices: &[Slice],
    config: &GeneralWbConfig,
    split_seed: u64,
) -> Result<Vec<Example>> {
    let (inside, outside) = random_halves(holdout, seed::derive(split_seed, seed::tag::HALVES, 0))?;
    let shadow = spec.train_like(template.layers(), &inside, seed::derive(split_seed, seed::tag::SHADOW, 0))?;
    let proxies = slices
        .iter()
        .map(|&s| train_head(spec, &shadow, s, &outside, seed::derive(split_seed, seed::tag::PROXY, s.layer_index as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(holdout.len());
    for (data, member) in [(&inside, true), (&outside, false)] {
        for (x, y) in data.iter() {
            let tuples = slices
                .iter()
                .zip(&proxies)
                .map(|(&s, p)| SliceTuple::build(&shadow, p, s, x, y, config.steps))
                .collect::<Result<Vec<_>>>()?;
            out.push(Example { slices: tuples, member });
        }
    }
    Ok(out)
}

/// Fits the displacement nets (and the meta model when there are several
/// slices) by minimizing binary cross-entropy on the shadow-built tuples.
fn fit(
    examples: &[Example],
    slice_count: usize,
    config: &GeneralWbConfig,
    seed: u64,
) -> Result<(Vec<DisplacementNet>, Option<Network>)> {
    let mut displacements: Vec<DisplacementNet> = (0..slice_count as u64)
        .map(|l| DisplacementNet::new(config.n_d, seed::derive(seed, seed::tag::ATTACK_MODEL, l)))
        .collect();
    let mut meta = if slice_count > 1 {
        Some(build_meta_network(slice_count, config.n_m, seed::derive(seed, seed::tag::META, 0))?)
    } else {
        None
    };
    let meta_len = meta.as_ref().map_or(0, Network::param_count);
    let d_len = DisplacementNet::param_count_for(config.n_d);
    let mut params = meta.as_ref().map_or_else(Vec::new, Network::params);
    for d in &displacements {
        params.extend_from_slice(d.params());
    }
    let mut grads = vec![0.0; params.len()];
    let mut optimizer = Optimizer::new(&config.optimizer, params.len());
    let mut rng = seed::rng(seed::derive(seed, seed::tag::ATTACK_MODEL, u64::MAX));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut logits = vec![0.0; slice_count];

    for epoch in 1..=config.optimizer.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.optimizer.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &examples[i];
                for ((l, t), d) in logits.iter_mut().zip(&ex.slices).zip(&displacements) {
                    *l = t.logit(d);
                }
                let upstream: Vec<f64> = match &meta {
                    None => {
                        let z = logits[0];
                        total += if ex.member { softplus(-z) } else { softplus(z) };
                        vec![sigmoid(z) - if ex.member { 1.0 } else { 0.0 }]
                    }
                    Some(m) => {
                        let g = m.gradient(&logits, &LossSpec::BinaryCrossEntropy { target: ex.member })?;
                        total += g.value;
                        for (acc, v) in grads[..meta_len].iter_mut().zip(g.flat()) {
                            *acc += v * scale;
                        }
                        g.input.clone()
                    }
                };
                for (l, ((t, d), up)) in ex.slices.iter().zip(&displacements).zip(upstream).enumerate() {
                    let start = meta_len + l * d_len;
                    d.logit_grad(
                        &t.target_w,
                        &t.proxy_w,
                        t.target_b,
                        t.proxy_b,
                        &t.z,
                        up * scale,
                        &mut grads[start..start + d_len],
                    );
                }
            }
            optimizer.step(&mut params, &grads);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
            if let Some(m) = meta.as_mut() {
                m.set_params(&params[..meta_len])?;
            }
            for (l, d) in displacements.iter_mut().enumerate() {
                let start = meta_len + l * d_len;
                d.params_mut().copy_from_slice(&params[start..start + d_len]);
            }
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::trace!("general-wb epoch {epoch}: loss {mean:.6}");
    }
    Ok((displacements, meta))
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Builds training tuples from `config.splits` in/out splits of `holdout`
/// (shadow on the in half, proxy on the out half), learns the displacement
/// nets, and pairs the target with proxies trained on all of `holdout`.
pub fn general_wb_train(
    target: &Network,
    holdout: &LabeledDataset,
    spec: &TargetSpec,
    config: &GeneralWbConfig,
    seed: u64,
) -> Result<GeneralWb> {
    config.validate()?;
    if holdout.len() < 2 {
        return Err(Error::Split("holdout needs at least two records to split in half".into()));
    }
    let slices = config.resolve_slices(target)?;
    let mut examples = Vec::with_capacity(config.splits * holdout.len());
    for i in 0..config.splits as u64 {
        let split_seed = seed::derive(seed, seed::tag::ATTACK, i);
        examples.extend(split_examples(spec, target, holdout, &slices, config, split_seed)?);
    }
    let (displacements, meta) = fit(&examples, slices.len(), config, seed)?;
    let proxies = slices
        .iter()
        .map(|&s| train_head(spec, target, s, holdout, seed::derive(seed, seed::tag::PROXY, s.layer_index as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneralWb {
        target: target.clone(),
        slices,
        proxies,
        displacements,
        meta,
        steps: config.steps,
    })
}
