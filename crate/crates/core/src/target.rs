//! Target, proxy and shadow model training, plus the closed-form GNB-optimal
//! linear model.

use serde::{Deserialize, Serialize};

use crate::data::{GnbParams, LabeledDataset};
use crate::nn::{train_classifier, Activation, DenseLayer, LossKind, Network, OptimizerConfig, Tensor2};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// A single dense softmax layer.
    LinearSoftmax,
    /// One ReLU hidden layer followed by softmax. `hidden` defaults to twice
    /// the number of input features.
    MlpOneHidden {
        #[serde(default)]
        hidden: Option<usize>,
    },
}

/// Architecture plus training recipe. Proxies and shadows are trained with
/// exactly the target's recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    pub architecture: Architecture,
    pub optimizer: OptimizerConfig,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::LinearSoftmax,
            optimizer: OptimizerConfig::sgd(),
        }
    }
}

impl TargetSpec {
    pub fn linear() -> Self {
        Self::default()
    }

    pub fn mlp() -> Self {
        Self {
            architecture: Architecture::MlpOneHidden { hidden: None },
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            optimizer: self.optimizer.with_seed(seed),
            ..self.clone()
        }
    }

    /// Untrained network for `features` inputs and `classes` outputs.
    pub fn build(&self, features: usize, classes: usize, seed: u64) -> Result<Network> {
        match self.architecture {
            Architecture::LinearSoftmax => Network::random(&[features, classes], &[Activation::Softmax], seed),
            Architecture::MlpOneHidden { hidden } => {
                let h = hidden.unwrap_or(2 * features);
                if h == 0 {
                    return Err(Error::contract("hidden width must be at least 1"));
                }
                Network::random(&[features, h, classes], &[Activation::Relu, Activation::Softmax], seed)
            }
        }
    }

    /// Builds and trains a fresh network of this architecture on `data`.
    pub fn train(&self, data: &LabeledDataset, seed: u64) -> Result<Network> {
        let net = self.build(data.feature_count(), data.class_count(), seed::derive(seed, seed::tag::TARGET, 0))?;
        fit(net, data, &self.optimizer.with_seed(seed))
    }

    /// Trains a fresh copy of the layer stack `template` on `data` with this
    /// recipe, seeded by `seed`.
    pub fn train_like(&self, template: &[DenseLayer], data: &LabeledDataset, seed: u64) -> Result<Network> {
        let net = Network::fresh_like(template, seed::derive(seed, seed::tag::TARGET, 0))?;
        fit(net, data, &self.optimizer.with_seed(seed))
    }
}

fn fit(net: Network, data: &LabeledDataset, opt: &OptimizerConfig) -> Result<Network> {
    if data.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    if data.class_count() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "class count",
            expected: net.output_dim(),
            got: data.class_count(),
        });
    }
    Ok(train_classifier(net, data.features(), data.labels(), opt, LossKind::CategoricalCrossEntropy)?.network)
}

/// Trains the target with categorical cross-entropy, seeded by the spec's
/// optimizer seed.
pub fn train_target(spec: &TargetSpec, train: &LabeledDataset) -> Result<Network> {
    spec.train(train, spec.optimizer.seed)
}

/// The linear softmax model that is optimal for GNB data with the given
/// parameters: `W_jy = μ_yj / σ²_j`, `b_y = -Σ_j μ²_yj / (2σ²_j) + log p_y`.
pub fn closed_form_gnb_linear(params: &GnbParams) -> Result<Network> {
    params.check_variance_floor()?;
    let (c, d) = (params.class_count(), params.feature_count());
    let mut w = Tensor2::zeros(d, c);
    let mut b = vec![0.0; c];
    for y in 0..c {
        let mu = params.mean(y);
        let mut quad = 0.0;
        for j in 0..d {
            w.set(j, y, mu[j] / params.variances[j]);
            quad += mu[j] * mu[j] / (2.0 * params.variances[j]);
        }
        b[y] = -quad + params.prior[y].ln();
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("closed-form bias is not finite (zero prior?)"));
    }
    Network::new(vec![DenseLayer::new(w, b, Activation::Softmax)?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub accuracy: f64,
    /// `correct[i]` is true when record `i` is classified correctly.
    pub correct: Vec<bool>,
}

impl ModelEvaluation {
    pub fn correct_count(&self) -> usize {
        self.correct.iter().filter(|&&c| c).count()
    }
}

/// Argmax accuracy (ties to the lowest class) and per-record correctness.
pub fn evaluate_model(net: &Network, data: &LabeledDataset) -> Result<ModelEvaluation> {
    let correct = data
        .iter()
        .map(|(x, y)| net.predict_class(x).map(|p| p == y))
        .collect::<Result<Vec<_>>>()?;
    let hits = correct.iter().filter(|&&c| c).count();
    let accuracy = if correct.is_empty() {
        0.0
    } else {
        hits as f64 / correct.len() as f64
    };
    Ok(ModelEvaluation { accuracy, correct })
}
