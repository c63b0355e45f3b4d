use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// Learned element-wise comparison `D(a, b)` of a target parameter `a` with
/// the matching proxy parameter `b`.
///
/// Equivalent to a 1-D convolution over interleaved pairs with kernel and
/// stride 2, followed by kernel-1 layers: a per-pair MLP
/// `2 → hidden (ReLU) → 1`. With `hidden == 0` it is the affine map
/// `α·a + β·b + γ`, the least capacity that can express subtraction.
///
/// Parameter layout with `h = hidden > 0`: first-layer weights `[h][2]`,
/// first-layer biases `[h]`, output weights `[h]`, output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementNet {
    hidden: usize,
    params: Vec<f64>,
}

impl DisplacementNet {
    pub fn param_count_for(hidden: usize) -> usize {
        if hidden == 0 {
            3
        } else {
            4 * hidden + 1
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut params = vec![0.0; Self::param_count_for(hidden)];
        if hidden == 0 {
            let limit = (6.0f64 / 3.0).sqrt();
            params[0] = rng.random_range(-limit..=limit);
            params[1] = rng.random_range(-limit..=limit);
        } else {
            let first = (6.0 / (2 + hidden) as f64).sqrt();
            for p in &mut params[..2 * hidden] {
                *p = rng.random_range(-first..=first);
            }
            let second = (6.0 / (hidden + 1) as f64).sqrt();
            for p in &mut params[3 * hidden..4 * hidden] {
                *p = rng.random_range(-second..=second);
            }
        }
        Self { hidden, params }
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::param_count_for(hidden) {
            return Err(Error::DimensionMismatch {
                context: "displacement parameters",
                expected: Self::param_count_for(hidden),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("displacement parameter is not finite"));
        }
        Ok(Self { hidden, params })
    }

    /// `D(a, b) = a − b`.
    pub fn subtraction() -> Self {
        Self {
            hidden: 0,
            params: vec![1.0, -1.0, 0.0],
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    #[inline]
    pub fn apply(&self, a: f64, b: f64) -> f64 {
        let p = &self.params;
        let h = self.hidden;
        if h == 0 {
            return p[0] * a + p[1] * b + p[2];
        }
        let mut out = p[4 * h];
        for k in 0..h {
            let pre = p[2 * k] * a + p[2 * k + 1] * b + p[2 * h + k];
            if pre > 0.0 {
                out += p[3 * h + k] * pre;
            }
        }
        out
    }

    /// Adds `upstream · ∂D(a, b)/∂params` into `grad`.
    #[inline]
    pub(crate) fn accumulate_grad(&self, a: f64, b: f64, upstream: f64, grad: &mut [f64]) {
        let p = &self.params;
        let h = self.hidden;
        if h == 0 {
            grad[0] += upstream * a;
            grad[1] += upstream * b;
            grad[2] += upstream;
            return;
        }
        grad[4 * h] += upstream;
        for k in 0..h {
            let pre = p[2 * k] * a + p[2 * k + 1] * b + p[2 * h + k];
            if pre > 0.0 {
                grad[3 * h + k] += upstream * pre;
                let t = upstream * p[3 * h + k];
                grad[2 * k] += t * a;
                grad[2 * k + 1] += t * b;
                grad[2 * h + k] += t;
            }
        }
    }

    /// `D(ŵ, w̃)ᵀz + D(b̂, b̃)`.
    pub fn logit(&self, target_w: &[f64], proxy_w: &[f64], target_b: f64, proxy_b: f64, z: &[f64]) -> f64 {
        debug_assert!(target_w.len() == z.len() && proxy_w.len() == z.len());
        let mut out = self.apply(target_b, proxy_b);
        for ((&a, &b), &x) in target_w.iter().zip(proxy_w).zip(z) {
            out += self.apply(a, b) * x;
        }
        out
    }

    /// Adds `upstream · ∂logit/∂params` into `grad`.
    pub(crate) fn logit_grad(
        &self,
        target_w: &[f64],
        proxy_w: &[f64],
        target_b: f64,
        proxy_b: f64,
        z: &[f64],
        upstream: f64,
        grad: &mut [f64],
    ) {
        self.accumulate_grad(target_b, proxy_b, upstream, grad);
        for ((&a, &b), &x) in target_w.iter().zip(proxy_w).zip(z) {
            if x != 0.0 {
                self.accumulate_grad(a, b, upstream * x, grad);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(net: &DisplacementNet, f: impl Fn(&DisplacementNet) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..net.params.len())
            .map(|i| {
                let mut up = net.clone();
                up.params[i] += h;
                let mut down = net.clone();
                down.params[i] -= h;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn subtraction_is_exact() {
        let d = DisplacementNet::subtraction();
        assert_eq!(d.apply(3.5, 1.25), 2.25);
        assert_eq!(d.logit(&[1.0, 2.0], &[0.5, 2.5], 1.0, 0.0, &[2.0, 1.0]), 1.0 - 0.5 + 1.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (tw, pw, z) = ([0.3, -1.2, 0.8], [0.1, 0.4, -0.6], [1.5, -0.7, 0.2]);
        for hidden in [0, 1, 4, 16] {
            let mut net = DisplacementNet::new(hidden, hidden as u64 + 1);
            // shift biases away from zero so no unit sits on its kink
            for (i, p) in net.params_mut().iter_mut().enumerate() {
                *p += 0.01 * (i as f64 + 1.0).sin();
            }
            let mut analytic = vec![0.0; net.params.len()];
            net.logit_grad(&tw, &pw, 0.9, -0.2, &z, 1.0, &mut analytic);
            let numeric = finite_diff(&net, |n| n.logit(&tw, &pw, 0.9, -0.2, &z));
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "hidden {hidden}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn parameter_count() {
        assert_eq!(DisplacementNet::new(0, 1).params().len(), 3);
        assert_eq!(DisplacementNet::new(16, 1).params().len(), 65);
        assert!(DisplacementNet::from_params(2, vec![0.0; 8]).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(DisplacementNet::new(8, 3), DisplacementNet::new(8, 3));
        assert_ne!(DisplacementNet::new(8, 3), DisplacementNet::new(8, 4));
    }
}
