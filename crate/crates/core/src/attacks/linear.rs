use serde::{Deserialize, Serialize};

use super::{train_head_proxies, MembershipAttack, ProxyConfig};
use crate::data::{GnbParams, LabeledDataset};
use crate::influence::Slice;
use crate::nn::{Network, Tensor2};
use crate::target::TargetSpec;
use crate::{sigmoid, Error, Result};

/// One logistic membership model per class: `m^y(x) = σ(w^yᵀx + b^y)`.
///
/// `weights` is `features × classes`; column `y` is `w^y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMiModel {
    pub weights: Tensor2,
    pub biases: Vec<f64>,
}

impl LinearMiModel {
    pub fn new(weights: Tensor2, biases: Vec<f64>) -> Result<Self> {
        if biases.len() != weights.cols() {
            return Err(Error::DimensionMismatch {
                context: "membership model biases",
                expected: weights.cols(),
                got: biases.len(),
            });
        }
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::contract("membership model bias is not finite"));
        }
        Ok(Self { weights, biases })
    }

    pub fn class_count(&self) -> usize {
        self.biases.len()
    }

    pub fn feature_count(&self) -> usize {
        self.weights.rows()
    }

    /// `w^yᵀx + b^y`. Reads only class `y`'s parameters.
    pub fn logit(&self, x: &[f64], y: usize) -> Result<f64> {
        if y >= self.class_count() {
            return Err(Error::contract(format!("class {y} out of range")));
        }
        if x.len() != self.feature_count() {
            return Err(Error::DimensionMismatch {
                context: "membership model input",
                expected: self.feature_count(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| v * self.weights.get(j, y))
            .sum::<f64>()
            + self.biases[y])
    }
}

impl MembershipAttack for LinearMiModel {
    fn confidence(&self, x: &[f64], y: usize) -> Result<f64> {
        mi_confidence(self, x, y)
    }
}

pub fn mi_confidence(model: &LinearMiModel, x: &[f64], y: usize) -> Result<f64> {
    model.logit(x, y).map(sigmoid)
}

/// Bayes-optimal membership model for GNB data with known true and
/// empirical parameters. The true variances are used for both.
pub fn omniscient_model(true_params: &GnbParams, emp_params: &GnbParams) -> Result<LinearMiModel> {
    let (c, d) = (true_params.class_count(), true_params.feature_count());
    if emp_params.class_count() != c || emp_params.feature_count() != d {
        return Err(Error::contract("true and empirical parameters differ in shape"));
    }
    true_params.check_variance_floor()?;
    let var = &true_params.variances;
    let mut w = Tensor2::zeros(d, c);
    let mut b = vec![0.0; c];
    for y in 0..c {
        let (star, hat) = (true_params.mean(y), emp_params.mean(y));
        let mut bias = (emp_params.prior[y] / true_params.prior[y]).ln();
        for j in 0..d {
            w.set(j, y, (hat[j] - star[j]) / var[j]);
            bias += (star[j] * star[j] - hat[j] * hat[j]) / (2.0 * var[j]);
        }
        b[y] = bias;
    }
    LinearMiModel::new(w, b)
}

/// `w^y = Ŵ_:y − mean_i W̃⁽ⁱ⁾_:y`, `b^y = b̂_y − mean_i b̃⁽ⁱ⁾_y` for
/// single-layer softmax target and proxies.
pub fn bayes_wb_from_models(target: &Network, proxies: &[Network]) -> Result<LinearMiModel> {
    if target.layer_count() != 1 {
        return Err(Error::contract("linear bayes-wb needs a single-layer target"));
    }
    if proxies.is_empty() {
        return Err(Error::contract("at least one proxy is required"));
    }
    let t = &target.layers()[0];
    let mut w_sum = Tensor2::zeros(t.input_dim(), t.output_dim());
    let mut b_sum = vec![0.0; t.output_dim()];
    for p in proxies {
        if p.layer_count() != 1 || p.input_dim() != t.input_dim() || p.output_dim() != t.output_dim() {
            return Err(Error::contract("proxy shape differs from the target"));
        }
        let l = &p.layers()[0];
        for (s, &v) in w_sum.as_mut_slice().iter_mut().zip(l.weights().as_slice()) {
            *s += v;
        }
        for (s, &v) in b_sum.iter_mut().zip(l.biases()) {
            *s += v;
        }
    }
    let n = proxies.len() as f64;
    let mut w = t.weights().clone();
    for (o, s) in w.as_mut_slice().iter_mut().zip(w_sum.as_slice()) {
        *o -= s / n;
    }
    let b = t.biases().iter().zip(&b_sum).map(|(t, s)| t - s / n).collect();
    LinearMiModel::new(w, b)
}

/// Trains `proxies.count` proxies on bootstrap samples of `holdout` with the
/// target's recipe and differences their averaged parameters against the
/// target's.
pub fn bayes_wb_linear(
    target: &Network,
    holdout: &LabeledDataset,
    proxies: &ProxyConfig,
    spec: &TargetSpec,
    seed: u64,
) -> Result<LinearMiModel> {
    if target.layer_count() != 1 {
        return Err(Error::contract("linear bayes-wb needs a single-layer target"));
    }
    let models = train_head_proxies(spec, target, Slice { layer_index: 0 }, holdout, proxies, seed)?;
    bayes_wb_from_models(target, &models)
}
