use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward_layers, loss_seed, LossSpec, Network};
use super::Tensor2;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdNesterov,
    Adam,
}

/// Stop once the mean epoch loss improves by less than `min_delta` for
/// `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub min_delta: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            min_delta: 1e-5,
            patience: 10,
        }
    }
}

/// Optimizer settings. In config files every field is optional; missing
/// fields take the defaults of `kind` (see [`OptimizerConfig::sgd`] and
/// [`OptimizerConfig::adam`]).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Per-step decay: `lr / (1 + decay * step)`.
    pub decay: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialOptimizer {
    kind: Option<OptimizerKind>,
    learning_rate: Option<f64>,
    decay: Option<f64>,
    momentum: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    // absent keeps the default, `null` disables early stopping
    #[serde(default, deserialize_with = "present")]
    early_stop: Option<Option<EarlyStop>>,
}

fn present<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Option<EarlyStop>>, D::Error> {
    Option::<EarlyStop>::deserialize(d).map(Some)
}

impl PartialOptimizer {
    fn resolve(self, fallback: OptimizerKind) -> OptimizerConfig {
        let base = match self.kind.unwrap_or(fallback) {
            OptimizerKind::SgdNesterov => OptimizerConfig::sgd(),
            OptimizerKind::Adam => OptimizerConfig::adam(),
        };
        OptimizerConfig {
            kind: base.kind,
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            decay: self.decay.unwrap_or(base.decay),
            momentum: self.momentum.unwrap_or(base.momentum),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            seed: self.seed.unwrap_or(base.seed),
            early_stop: self.early_stop.unwrap_or(base.early_stop),
        }
    }
}

/// Reads an optimizer block whose `kind` defaults to SGD.
impl<'de> Deserialize<'de> for OptimizerConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(PartialOptimizer::deserialize(d)?.resolve(OptimizerKind::SgdNesterov))
    }
}

/// Reads an optimizer block whose `kind` defaults to Adam, for attack-side
/// models.
pub fn deserialize_adam_default<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<OptimizerConfig, D::Error> {
    Ok(PartialOptimizer::deserialize(d)?.resolve(OptimizerKind::Adam))
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::sgd()
    }
}

impl OptimizerConfig {
    /// SGD with Nesterov momentum: lr 0.1, decay 1e-4, momentum 0.9.
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::SgdNesterov,
            learning_rate: 0.1,
            decay: 1e-4,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            early_stop: Some(EarlyStop::default()),
        }
    }

    /// Adam for the small attack-side models, 32 epochs.
    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            decay: 0.0,
            epochs: 32,
            early_stop: None,
            ..Self::sgd()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::contract("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::contract("decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract("momentum must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::contract("invalid Adam parameters"));
        }
        Ok(())
    }
}

/// Optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, param_count: usize) -> Self {
        Self {
            config: config.clone(),
            steps: 0,
            first: vec![0.0; param_count],
            second: match config.kind {
                OptimizerKind::Adam => vec![0.0; param_count],
                OptimizerKind::SgdNesterov => Vec::new(),
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        let c = &self.config;
        let lr = c.learning_rate / (1.0 + c.decay * self.steps as f64);
        self.steps += 1;
        match c.kind {
            OptimizerKind::SgdNesterov => {
                for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    *v = c.momentum * *v - lr * g;
                    *p += c.momentum * *v - lr * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let lr_t = lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + c.epsilon);
                }
            }
        }
    }
}

/// Tracks the early-stopping rule across epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    rule: Option<EarlyStop>,
    previous: Option<f64>,
    stalled: usize,
}

impl EarlyStopper {
    pub fn new(rule: Option<EarlyStop>) -> Self {
        Self {
            rule,
            previous: None,
            stalled: 0,
        }
    }

    /// Records an epoch loss; returns `true` when training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        let Some(rule) = self.rule else { return false };
        if let Some(prev) = self.previous {
            if prev - loss < rule.min_delta {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
        self.previous = Some(loss);
        self.stalled >= rule.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Targets are class indices.
    CategoricalCrossEntropy,
    /// Targets are 0/1.
    BinaryCrossEntropy,
}

impl LossKind {
    fn spec(self, target: usize) -> LossSpec {
        match self {
            LossKind::CategoricalCrossEntropy => LossSpec::CategoricalCrossEntropy { label: target },
            LossKind::BinaryCrossEntropy => LossSpec::BinaryCrossEntropy { target: target != 0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub network: Network,
    /// Mean training loss of every completed epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch training. Batch order is reshuffled every epoch from
/// `opt.seed`, so a fixed config and data set give bit-identical weights.
pub fn train_classifier(
    mut net: Network,
    inputs: &Tensor2,
    targets: &[usize],
    opt: &OptimizerConfig,
    loss: LossKind,
) -> Result<Trained> {
    opt.validate()?;
    if inputs.rows() == 0 {
        return Err(Error::contract("cannot train on an empty data set"));
    }
    if targets.len() != inputs.rows() {
        return Err(Error::DimensionMismatch {
            context: "training targets",
            expected: inputs.rows(),
            got: targets.len(),
        });
    }
    if inputs.cols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "training inputs",
            expected: net.input_dim(),
            got: inputs.cols(),
        });
    }
    let width = net.output_dim();
    match loss {
        LossKind::CategoricalCrossEntropy => {
            if let Some(&t) = targets.iter().find(|&&t| t >= width) {
                return Err(Error::contract(format!("label {t} out of range for {width} classes")));
            }
        }
        LossKind::BinaryCrossEntropy => {
            if targets.iter().any(|&t| t > 1) {
                return Err(Error::contract("binary targets must be 0 or 1"));
            }
        }
    }

    let mut rng = seed::rng(opt.seed);
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut optimizer = Optimizer::new(opt, net.param_count());
    let mut params = net.params();
    let mut grads = vec![0.0; params.len()];
    let mut stopper = EarlyStopper::new(opt.early_stop);
    let mut loss_trace = Vec::with_capacity(opt.epochs);

    for epoch in 1..=opt.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(opt.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let trace = forward_layers(net.layers(), inputs.row(i))?;
                let (value, delta) = loss_seed(net.layers(), &trace, &loss.spec(targets[i]))?;
                total += value;
                backward(net.layers(), &trace, delta, Some(&mut grads), false);
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            optimizer.step(&mut params, &grads);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
            net.set_params(&params)?;
        }
        let mean = total / inputs.rows() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        loss_trace.push(mean);
        if stopper.update(mean) {
            break;
        }
    }
    Ok(Trained {
        network: net,
        loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn blobs() -> (Tensor2, Vec<usize>) {
        // two well separated clusters
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.05;
            rows.push(vec![-2.0 + t, -1.0 - t]);
            labels.push(0);
            rows.push(vec![2.0 - t, 1.0 + t]);
            labels.push(1);
        }
        (Tensor2::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let (x, y) = blobs();
        let net = Network::random(&[2, 2], &[Activation::Softmax], 1).unwrap();
        let trained = train_classifier(net, &x, &y, &OptimizerConfig::sgd(), LossKind::CategoricalCrossEntropy).unwrap();
        let correct = (0..x.rows())
            .filter(|&i| trained.network.predict_class(x.row(i)).unwrap() == y[i])
            .count();
        assert_eq!(correct, x.rows());
        assert!(trained.loss_trace.last().unwrap() < &trained.loss_trace[0]);
    }

    #[test]
    fn zero_epochs_rejected() {
        let (x, y) = blobs();
        let net = Network::random(&[2, 2], &[Activation::Softmax], 1).unwrap();
        let cfg = OptimizerConfig {
            epochs: 0,
            ..OptimizerConfig::sgd()
        };
        let err = train_classifier(net, &x, &y, &cfg, LossKind::CategoricalCrossEntropy).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (x, y) = blobs();
        let run = || {
            let net = Network::random(&[2, 3, 2], &[Activation::Relu, Activation::Softmax], 5).unwrap();
            let cfg = OptimizerConfig::sgd().with_seed(11);
            train_classifier(net, &x, &y, &cfg, LossKind::CategoricalCrossEntropy)
                .unwrap()
                .network
                .params()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn divergence_names_the_epoch() {
        let (x, y) = blobs();
        let net = Network::random(&[2, 2], &[Activation::Softmax], 1).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            decay: 0.0,
            ..OptimizerConfig::sgd()
        };
        let scaled = Tensor2::new(x.rows(), 2, x.as_slice().iter().map(|v| v * 1e10).collect()).unwrap();
        match train_classifier(net, &scaled, &y, &cfg, LossKind::CategoricalCrossEntropy) {
            Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn adam_trains_binary_unit() {
        let (x, y) = blobs();
        let net = Network::random(&[2, 1], &[Activation::Sigmoid], 2).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 0.05,
            epochs: 100,
            ..OptimizerConfig::adam()
        };
        let trained = train_classifier(net, &x, &y, &cfg, LossKind::BinaryCrossEntropy).unwrap();
        let correct = (0..x.rows())
            .filter(|&i| (trained.network.forward(x.row(i)).unwrap()[0] > 0.5) == (y[i] == 1))
            .count();
        assert_eq!(correct, x.rows());
    }

    #[test]
    fn early_stop_counts_stalled_epochs() {
        let mut s = EarlyStopper::new(Some(EarlyStop {
            min_delta: 0.1,
            patience: 2,
        }));
        assert!(!s.update(1.0));
        assert!(!s.update(0.5));
        assert!(!s.update(0.45));
        assert!(s.update(0.44));
    }
}
