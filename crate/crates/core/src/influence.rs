//! Internal influence of a slice's features on its head's pre-softmax outputs,
//! and the per-point local linear approximation built from it.
//!
//! The baseline is the zero feature vector. The line integral is evaluated
//! with the midpoint rule.

use serde::{Deserialize, Serialize};

use crate::nn::{logit_jacobian, logits_of, Activation, DenseLayer, Network, Tensor2};
use crate::{Error, Result};

pub const DEFAULT_STEPS: usize = 50;

/// Largest per-class efficiency residual tolerated before a warning is
/// attached to a local approximation.
pub const RESIDUAL_WARN: f64 = 1e-2;

/// Splits a network into features `h = layers[..layer_index]` and head
/// `g = layers[layer_index..]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub layer_index: usize,
}

impl Slice {
    pub fn new(net: &Network, layer_index: usize) -> Result<Self> {
        if layer_index >= net.layer_count() {
            return Err(Error::contract(format!(
                "slice index {layer_index} out of range for {} layers",
                net.layer_count()
            )));
        }
        Ok(Self { layer_index })
    }

    /// The slice whose head is the final layer alone.
    pub fn top(net: &Network) -> Self {
        Self {
            layer_index: net.layer_count() - 1,
        }
    }

    /// Every valid slice of `net`, bottom first.
    pub fn all(net: &Network) -> Vec<Self> {
        (0..net.layer_count()).map(|layer_index| Self { layer_index }).collect()
    }

    fn check(&self, net: &Network) -> Result<()> {
        Self::new(net, self.layer_index).map(|_| ())
    }

    pub fn features(&self, net: &Network, x: &[f64]) -> Result<Vec<f64>> {
        self.check(net)?;
        net.features_at(self.layer_index, x)
    }

    pub fn head<'a>(&self, net: &'a Network) -> &'a [DenseLayer] {
        net.top(self.layer_index)
    }
}

/// True when the head's pre-softmax output is affine in its input.
pub fn is_affine(head: &[DenseLayer]) -> bool {
    head.len() == 1 || head[..head.len() - 1].iter().all(|l| l.activation() == Activation::Identity)
}

/// Influence of the head's input features at `z` on each pre-softmax output,
/// `features × classes`.
///
/// A single-layer head returns its weight matrix exactly.
pub fn head_influence(head: &[DenseLayer], z: &[f64], steps: usize) -> Result<Tensor2> {
    if steps == 0 {
        return Err(Error::contract("influence needs at least one quadrature step"));
    }
    let first = head.first().ok_or_else(|| Error::contract("empty head"))?;
    if z.len() != first.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "slice features",
            expected: first.input_dim(),
            got: z.len(),
        });
    }
    if head.len() == 1 {
        return Ok(first.weights().clone());
    }
    let classes = head.last().unwrap().output_dim();
    let mut sum = vec![0.0; z.len() * classes];
    let mut point = vec![0.0; z.len()];
    for k in 0..steps {
        let t = (k as f64 + 0.5) / steps as f64;
        for (p, &v) in point.iter_mut().zip(z) {
            *p = t * v;
        }
        let jac = logit_jacobian(head, &point)?;
        for (s, &j) in sum.iter_mut().zip(jac.as_slice()) {
            *s += j;
        }
    }
    let n = steps as f64;
    Tensor2::new(z.len(), classes, sum.into_iter().map(|s| s / n).collect())
}

/// Influence of slice features on the head's pre-softmax outputs at `x`.
pub fn internal_influence(net: &Network, slice: Slice, x: &[f64], steps: usize) -> Result<Tensor2> {
    let z = slice.features(net, x)?;
    head_influence(slice.head(net), &z, steps)
}

/// Per-point linear surrogate `ḡ(z) = Wᵀz + b` of a head.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearApprox {
    /// `features × classes`.
    pub weights: Tensor2,
    /// Pre-softmax head output at the zero baseline.
    pub bias: Vec<f64>,
    /// Per-class efficiency residual at the point the approximation was built.
    pub residual: Vec<f64>,
    pub warning: Option<String>,
}

impl LocalLinearApprox {
    pub fn evaluate(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (j, &zj) in z.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.weights.row(j)) {
                *o += zj * w;
            }
        }
        out
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().cloned().fold(0.0, f64::max)
    }
}

/// Local linear approximation of a head around feature vector `z`.
pub fn head_linear_approx(head: &[DenseLayer], z: &[f64], steps: usize) -> Result<LocalLinearApprox> {
    let weights = head_influence(head, z, steps)?;
    let bias = logits_of(head, &vec![0.0; z.len()])?;
    let at_z = logits_of(head, z)?;
    let mut approx = LocalLinearApprox {
        weights,
        bias,
        residual: Vec::new(),
        warning: None,
    };
    let reconstructed = approx.evaluate(z);
    approx.residual = reconstructed.iter().zip(&at_z).map(|(r, g)| (r - g).abs()).collect();
    if approx.max_residual() > RESIDUAL_WARN {
        approx.warning = Some(format!(
            "efficiency residual {:.3e} exceeds {RESIDUAL_WARN:e} at {steps} steps",
            approx.max_residual()
        ));
    }
    Ok(approx)
}

pub fn local_linear_approx(net: &Network, slice: Slice, x: &[f64], steps: usize) -> Result<LocalLinearApprox> {
    let z = slice.features(net, x)?;
    head_linear_approx(slice.head(net), &z, steps)
}

/// Per-class `|Σ_j χ_j z_j − (g(z) − g(0))|` on pre-softmax outputs.
pub fn efficiency_residual(net: &Network, slice: Slice, x: &[f64], steps: usize) -> Result<Vec<f64>> {
    Ok(local_linear_approx(net, slice, x, steps)?.residual)
}
