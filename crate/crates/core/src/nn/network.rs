//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Weights are stored `in × out`, so column `k` of a layer's weight matrix is
//! the weight vector of output unit `k`. The ReLU derivative at exactly zero is
//! taken to be 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::{seed, sigmoid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, pre: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Sigmoid => pre.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Identity => pre.to_vec(),
            Activation::Softmax => softmax(pre),
        }
    }

    fn is_elementwise(self) -> bool {
        !matches!(self, Activation::Softmax)
    }

    /// Derivative of an elementwise activation given its pre-activation and
    /// output values.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => post * (1.0 - post),
            Activation::Identity => 1.0,
            Activation::Softmax => unreachable!("softmax has no elementwise derivative"),
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Tensor2,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if biases.len() != weights.cols() {
            return Err(Error::DimensionMismatch {
                context: "layer biases",
                expected: weights.cols(),
                got: biases.len(),
            });
        }
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::contract("layer bias is not finite"));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero biases.
    pub fn random<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Tensor2::new(inputs, outputs, data).expect("finite init"),
            biases: vec![0.0; outputs],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Tensor2 {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.biases.len()
    }

    /// `Wᵀx + b`.
    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.biases.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.weights.row(i)) {
                *o += xi * w;
            }
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn weights_mut(&mut self) -> &mut Tensor2 {
        &mut self.weights
    }

    #[cfg(test)]
    pub(crate) fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}

/// What to differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    /// `-log softmax(logits)[label]`; requires a softmax output layer.
    CategoricalCrossEntropy { label: usize },
    /// Binary cross-entropy; requires a single sigmoid output unit.
    BinaryCrossEntropy { target: bool },
    /// Post-activation output coordinate.
    Output { index: usize },
    /// Pre-activation coordinate of the final layer.
    Logit { index: usize },
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input")
    }

    pub fn logits(&self) -> &[f64] {
        self.pre_activations.last().expect("at least one layer")
    }
}

/// Gradients of a scalar with respect to every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: f64,
    /// Per layer `(weights, biases)` gradients, shaped like the parameters.
    pub layers: Vec<(Tensor2, Vec<f64>)>,
    pub input: Vec<f64>,
}

impl Gradient {
    /// Parameter gradients in [`Network::params`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Forward pass over a run of layers.
pub fn forward_layers(layers: &[DenseLayer], x: &[f64]) -> Result<ForwardTrace> {
    let first = layers.first().ok_or_else(|| Error::contract("empty layer stack"))?;
    if x.len() != first.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: first.input_dim(),
            got: x.len(),
        });
    }
    let mut activations = Vec::with_capacity(layers.len() + 1);
    let mut pre_activations = Vec::with_capacity(layers.len());
    activations.push(x.to_vec());
    for layer in layers {
        let pre = layer.pre_activation(activations.last().unwrap());
        activations.push(layer.activation.apply(&pre));
        pre_activations.push(pre);
    }
    Ok(ForwardTrace {
        activations,
        pre_activations,
    })
}

/// Output of the layer stack without keeping intermediates.
pub fn output_of(layers: &[DenseLayer], x: &[f64]) -> Result<Vec<f64>> {
    forward_layers(layers, x).map(|t| t.activations.into_iter().last().unwrap())
}

/// Pre-activation of the final layer of the stack.
pub fn logits_of(layers: &[DenseLayer], x: &[f64]) -> Result<Vec<f64>> {
    forward_layers(layers, x).map(|t| t.pre_activations.into_iter().last().unwrap())
}

/// Seeds the backward pass: the loss value and its derivative with respect to
/// the final pre-activation.
pub(crate) fn loss_seed(layers: &[DenseLayer], trace: &ForwardTrace, loss: &LossSpec) -> Result<(f64, Vec<f64>)> {
    let last = layers.last().expect("non-empty");
    let pre = trace.logits();
    let out = trace.output();
    let width = pre.len();
    let check_index = |i: usize| {
        if i >= width {
            Err(Error::contract(format!("output index {i} out of range for width {width}")))
        } else {
            Ok(())
        }
    };
    match *loss {
        LossSpec::CategoricalCrossEntropy { label } => {
            if last.activation != Activation::Softmax {
                return Err(Error::contract("categorical cross-entropy needs a softmax output"));
            }
            check_index(label)?;
            let value = log_sum_exp(pre) - pre[label];
            let mut delta = out.to_vec();
            delta[label] -= 1.0;
            Ok((value, delta))
        }
        LossSpec::BinaryCrossEntropy { target } => {
            if last.activation != Activation::Sigmoid || width != 1 {
                return Err(Error::contract("binary cross-entropy needs one sigmoid output"));
            }
            let s = pre[0];
            let t = if target { 1.0 } else { 0.0 };
            let value = s.max(0.0) - s * t + (-s.abs()).exp().ln_1p();
            Ok((value, vec![out[0] - t]))
        }
        LossSpec::Logit { index } => {
            check_index(index)?;
            let mut delta = vec![0.0; width];
            delta[index] = 1.0;
            Ok((pre[index], delta))
        }
        LossSpec::Output { index } => {
            check_index(index)?;
            let delta = match last.activation {
                Activation::Softmax => {
                    // d p_index / d pre_k = p_index (δ_ik - p_k)
                    let p = out[index];
                    out.iter()
                        .enumerate()
                        .map(|(k, &pk)| if k == index { p * (1.0 - p) } else { -p * pk })
                        .collect()
                }
                act => {
                    let mut d = vec![0.0; width];
                    d[index] = act.derivative(pre[index], out[index]);
                    d
                }
            };
            Ok((out[index], delta))
        }
    }
}

/// Backpropagates `delta` (derivative w.r.t. the final pre-activation).
///
/// Parameter gradients are added into `param_grads` (flat, [`Network::params`]
/// order) when given. Returns the input gradient when `want_input` is set.
pub(crate) fn backward(
    layers: &[DenseLayer],
    trace: &ForwardTrace,
    mut delta: Vec<f64>,
    mut param_grads: Option<&mut [f64]>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for layer in layers {
        offsets.push(acc);
        acc += layer.param_count();
    }
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let input = &trace.activations[l];
        let (n_in, n_out) = (layer.input_dim(), layer.output_dim());
        if let Some(grads) = param_grads.as_deref_mut() {
            let base = offsets[l];
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut grads[base + i * n_out..base + (i + 1) * n_out];
                for (g, &d) in row.iter_mut().zip(&delta) {
                    *g += xi * d;
                }
            }
            let bias = &mut grads[base + n_in * n_out..base + n_in * n_out + n_out];
            for (g, &d) in bias.iter_mut().zip(&delta) {
                *g += d;
            }
        }
        if l == 0 && !want_input {
            break;
        }
        let mut upstream = vec![0.0; n_in];
        for (i, u) in upstream.iter_mut().enumerate() {
            *u = layer
                .weights
                .row(i)
                .iter()
                .zip(&delta)
                .map(|(w, d)| w * d)
                .sum();
        }
        if l == 0 {
            return Some(upstream);
        }
        let below = &layers[l - 1];
        let pre = &trace.pre_activations[l - 1];
        let post = &trace.activations[l];
        for ((u, &p), &q) in upstream.iter_mut().zip(pre).zip(post) {
            *u *= below.activation.derivative(p, q);
        }
        delta = upstream;
    }
    None
}

/// Gradient of pre-activation `index` of the final layer with respect to the
/// stack's input.
pub fn logit_input_gradient(layers: &[DenseLayer], z: &[f64], index: usize) -> Result<Vec<f64>> {
    let trace = forward_layers(layers, z)?;
    let (_, delta) = loss_seed(layers, &trace, &LossSpec::Logit { index })?;
    Ok(backward(layers, &trace, delta, None, true).expect("input requested"))
}

/// Jacobian of the final pre-activation with respect to the stack's input,
/// laid out `input × outputs` like a weight matrix: entry `(j, c)` is
/// `∂logit_c / ∂z_j`.
pub fn logit_jacobian(layers: &[DenseLayer], z: &[f64]) -> Result<Tensor2> {
    let trace = forward_layers(layers, z)?;
    let classes = layers.last().unwrap().output_dim();
    // acc is (width of current layer output) × classes, row-major
    let mut acc = Tensor2::identity(classes).into_data();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (n_in, n_out) = (layer.input_dim(), layer.output_dim());
        let mut next = vec![0.0; n_in * classes];
        for i in 0..n_in {
            let dst = &mut next[i * classes..(i + 1) * classes];
            for (o, &w) in layer.weights.row(i).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(&acc[o * classes..(o + 1) * classes]) {
                    *d += w * a;
                }
            }
        }
        debug_assert_eq!(acc.len(), n_out * classes);
        if l > 0 {
            let below = &layers[l - 1];
            let (pre, post) = (&trace.pre_activations[l - 1], &trace.activations[l]);
            for i in 0..n_in {
                let g = below.activation.derivative(pre[i], post[i]);
                next[i * classes..(i + 1) * classes].iter_mut().for_each(|v| *v *= g);
            }
        }
        acc = next;
    }
    Tensor2::new(z.len(), classes, acc)
}

/// A feed-forward network of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a network needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "adjacent layers",
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
            if !pair[0].activation.is_elementwise() {
                return Err(Error::contract(format!(
                    "softmax is only allowed on the final layer (found on layer {l})"
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized network with layer widths `dims[0] → dims[1] → …`.
    pub fn random(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::contract("need one activation per layer and at least two widths"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::contract("layer widths must be positive"));
        }
        let mut rng = seed::rng(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::random(w[0], w[1], act, &mut rng))
            .collect();
        Self::new(layers)
    }

    /// Same shapes and activations as `template`, freshly initialized.
    pub fn fresh_like(template: &[DenseLayer], seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed);
        let layers = template
            .iter()
            .map(|l| DenseLayer::random(l.input_dim(), l.output_dim(), l.activation, &mut rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    /// All activations of one forward pass.
    pub fn forward_eval(&self, x: &[f64]) -> Result<ForwardTrace> {
        forward_layers(&self.layers, x)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        output_of(&self.layers, x)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        logits_of(&self.layers, x)
    }

    /// Predicted class, lowest index on ties.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::argmax(&self.forward(x)?))
    }

    /// Exact gradients of `loss` with respect to every parameter and to `x`.
    pub fn gradient(&self, x: &[f64], loss: &LossSpec) -> Result<Gradient> {
        let trace = self.forward_eval(x)?;
        let (value, delta) = loss_seed(&self.layers, &trace, loss)?;
        let mut flat = vec![0.0; self.param_count()];
        let input = backward(&self.layers, &trace, delta, Some(&mut flat), true).expect("input requested");
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            let nw = layer.input_dim() * layer.output_dim();
            let w = Tensor2::new(layer.input_dim(), layer.output_dim(), flat[offset..offset + nw].to_vec())?;
            let b = flat[offset + nw..offset + layer.param_count()].to_vec();
            offset += layer.param_count();
            layers.push((w, b));
        }
        Ok(Gradient { value, layers, input })
    }

    /// Scalar value of `loss` at `x` (no gradients).
    pub fn loss_value(&self, x: &[f64], loss: &LossSpec) -> Result<f64> {
        let trace = self.forward_eval(x)?;
        Ok(loss_seed(&self.layers, &trace, loss)?.0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Parameters flattened layer by layer: weights (row-major), then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.input_dim() * layer.output_dim();
            layer.weights.as_mut_slice().copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Layers `0..index`: the feature extractor of a slice.
    pub fn bottom(&self, index: usize) -> &[DenseLayer] {
        &self.layers[..index]
    }

    /// Layers `index..`: the head of a slice.
    pub fn top(&self, index: usize) -> &[DenseLayer] {
        &self.layers[index..]
    }

    /// Applies the first `index` layers (identity when `index == 0`).
    pub fn features_at(&self, index: usize, x: &[f64]) -> Result<Vec<f64>> {
        if index == 0 {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "network input",
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
            return Ok(x.to_vec());
        }
        output_of(&self.layers[..index], x)
    }

    /// Network made of a copy of layers `index..`.
    pub fn head(&self, index: usize) -> Result<Network> {
        Network::new(self.layers[index..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weights: Tensor2, biases: Vec<f64>, act: Activation) -> Network {
        Network::new(vec![DenseLayer::new(weights, biases, act).unwrap()]).unwrap()
    }

    #[test]
    fn zero_softmax_is_uniform() {
        let net = single(Tensor2::zeros(3, 4), vec![0.0; 4], Activation::Softmax);
        let out = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        for p in out {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let net = single(Tensor2::new(2, 1, vec![1.0, -1.0]).unwrap(), vec![0.0], Activation::Sigmoid);
        assert_eq!(net.forward(&[0.7, 0.7]).unwrap(), vec![0.5]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(Tensor2::identity(3), vec![0.0; 3], Activation::Identity);
        let x = [1.5, -2.25, 0.125];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn trace_keeps_every_activation() {
        let net = Network::random(&[3, 5, 2], &[Activation::Relu, Activation::Softmax], 3).unwrap();
        let trace = net.forward_eval(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(trace.activations.len(), 3);
        assert_eq!(trace.activations[1].len(), 5);
        assert!(trace.activations[1].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn input_dimension_is_checked() {
        let net = Network::random(&[3, 2], &[Activation::Softmax], 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn softmax_only_on_last_layer() {
        let err = Network::random(&[2, 2, 2], &[Activation::Softmax, Activation::Softmax], 0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn layer_chain_is_checked() {
        let a = DenseLayer::new(Tensor2::zeros(2, 3), vec![0.0; 3], Activation::Relu).unwrap();
        let b = DenseLayer::new(Tensor2::zeros(4, 1), vec![0.0], Activation::Sigmoid).unwrap();
        assert!(Network::new(vec![a, b]).is_err());
    }

    #[test]
    fn linear_input_gradient_is_weight_column() {
        let w = Tensor2::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let net = single(w.clone(), vec![0.5, -0.5], Activation::Softmax);
        for j in 0..2 {
            let g = net.gradient(&[0.1, 0.2, 0.3], &LossSpec::Logit { index: j }).unwrap();
            assert_eq!(g.input, w.column(j));
        }
    }

    #[test]
    fn zero_softmax_cross_entropy_bias_gradient() {
        // bias gradient = softmax(0) - onehot(y) = (1/3, 1/3, 1/3) - e_1
        let net = single(Tensor2::zeros(2, 3), vec![0.0; 3], Activation::Softmax);
        let g = net
            .gradient(&[4.0, -7.0], &LossSpec::CategoricalCrossEntropy { label: 1 })
            .unwrap();
        let expected = [1.0 / 3.0, 1.0 / 3.0 - 1.0, 1.0 / 3.0];
        for (got, want) in g.layers[0].1.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((g.value - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let hidden = DenseLayer::new(Tensor2::new(1, 1, vec![1.0]).unwrap(), vec![0.0], Activation::Relu).unwrap();
        let out = DenseLayer::new(Tensor2::new(1, 1, vec![1.0]).unwrap(), vec![0.0], Activation::Identity).unwrap();
        let net = Network::new(vec![hidden, out]).unwrap();
        let g = net.gradient(&[0.0], &LossSpec::Output { index: 0 }).unwrap();
        assert_eq!(g.input, vec![0.0]);
    }

    #[test]
    fn params_round_trip() {
        let mut net = Network::random(&[3, 4, 2], &[Activation::Relu, Activation::Softmax], 9).unwrap();
        let mut p = net.params();
        p[0] = 42.0;
        net.set_params(&p).unwrap();
        assert_eq!(net.layers()[0].weights().get(0, 0), 42.0);
        assert_eq!(net.params(), p);
    }
}
