use serde::{Deserialize, Serialize};

use super::MembershipAttack;
use crate::data::{random_halves, LabeledDataset};
use crate::nn::{train_classifier, Activation, LossKind, Network, OptimizerConfig, Tensor2};
use crate::target::TargetSpec;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub shadows: usize,
    /// Hidden width of each per-class attack classifier.
    pub hidden: usize,
    #[serde(deserialize_with = "crate::nn::deserialize_adam_default")]
    pub optimizer: OptimizerConfig,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            shadows: 10,
            hidden: 16,
            optimizer: OptimizerConfig::adam(),
        }
    }
}

/// Black-box shadow-model attack: per class, a classifier over the target's
/// softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowAttack {
    pub target: Network,
    /// `None` for classes that never appeared in shadow data; those get
    /// confidence 1/2.
    pub models: Vec<Option<Network>>,
}

impl MembershipAttack for ShadowAttack {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        let model = self
            .models
            .get(y)
            .ok_or_else(|| Error::contract(format!("class {y} out of range")))?;
        match model {
            None => Ok(0.5),
            Some(m) => Ok(m.forward(&self.target.forward(x)?)?[0]),
        }
    }
}

/// Trains `config.shadows` shadows, each on a random half of `holdout` with
/// the other half as its non-members, and fits one in/out classifier per
/// class on the shadows' softmax outputs.
pub fn shadow_bb_train(
    spec: &TargetSpec,
    target: &Network,
    holdout: &LabeledDataset,
    config: &ShadowConfig,
    seed: u64,
) -> Result<ShadowAttack> {
    if config.shadows == 0 {
        return Err(Error::contract("shadow-bb needs at least one shadow model"));
    }
    let classes = target.output_dim();
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); classes];
    let mut labels: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for i in 0..config.shadows as u64 {
        let (inside, outside) = random_halves(holdout, seed::derive(seed, seed::tag::HALVES, i))?;
        let shadow = spec.train(&inside, seed::derive(seed, seed::tag::SHADOW, i))?;
        for (data, label) in [(&inside, 1), (&outside, 0)] {
            for (x, y) in data.iter() {
                rows[y].push(shadow.forward(x)?);
                labels[y].push(label);
            }
        }
    }
    let models = (0..classes)
        .map(|y| {
            if rows[y].is_empty() {
                return Ok(None);
            }
            let dims: Vec<usize> = if config.hidden == 0 {
                vec![classes, 1]
            } else {
                vec![classes, config.hidden, 1]
            };
            let acts: &[Activation] = if config.hidden == 0 {
                &[Activation::Sigmoid]
            } else {
                &[Activation::Relu, Activation::Sigmoid]
            };
            let net = Network::random(&dims, acts, seed::derive(seed, seed::tag::ATTACK_MODEL, y as u64))?;
            let opt = config.optimizer.with_seed(seed::derive(seed, seed::tag::ATTACK, y as u64));
            let inputs = Tensor2::from_rows(&rows[y])?;
            Ok(Some(train_classifier(net, &inputs, &labels[y], &opt, LossKind::BinaryCrossEntropy)?.network))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShadowAttack {
        target: target.clone(),
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gnb_meta_params, gen_synthetic, split_dataset, SplitSpec};
    use crate::target::train_target;

    #[test]
    fn deterministic_and_bounded() {
        let truth = gen_gnb_meta_params(3, 4, 1).unwrap();
        let data = gen_synthetic(&truth, 40, 2).unwrap();
        let split = split_dataset(&data, &SplitSpec::with_seed(3)).unwrap();
        let spec = TargetSpec::linear().with_seed(4);
        let target = train_target(&spec, &split.train).unwrap();
        let config = ShadowConfig {
            shadows: 2,
            ..ShadowConfig::default()
        };
        let a = shadow_bb_train(&spec, &target, &split.holdout, &config, 9).unwrap();
        let b = shadow_bb_train(&spec, &target, &split.holdout, &config, 9).unwrap();
        assert_eq!(a, b);
        for (x, y) in split.test.iter() {
            let c = a.confidence(x, y).unwrap();
            assert!(c > 0.0 && c < 1.0);
        }
    }

    #[test]
    fn missing_class_is_neutral() {
        let target = Network::random(&[2, 3], &[Activation::Softmax], 1).unwrap();
        let attack = ShadowAttack {
            target,
            models: vec![None, None, None],
        };
        assert_eq!(attack.confidence(&[0.1, 0.2], 2).unwrap(), 0.5);
        assert!(attack.confidence(&[0.1, 0.2], 3).is_err());
    }
}
