use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::nn::Tensor2;
use crate::{seed, Error, Result};

/// Lower bound applied wherever an estimated variance ends up in a
/// denominator.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Gaussian naive-Bayes parameters with a shared diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbParams {
    pub prior: Vec<f64>,
    /// `class_count × feature_count`; row `y` is the class mean.
    pub means: Tensor2,
    /// Shared per-feature variances.
    pub variances: Vec<f64>,
}

impl GnbParams {
    pub fn new(prior: Vec<f64>, means: Tensor2, variances: Vec<f64>) -> Result<Self> {
        if prior.len() != means.rows() {
            return Err(Error::DimensionMismatch {
                context: "GNB prior",
                expected: means.rows(),
                got: prior.len(),
            });
        }
        if variances.len() != means.cols() {
            return Err(Error::DimensionMismatch {
                context: "GNB variances",
                expected: means.cols(),
                got: variances.len(),
            });
        }
        if prior.iter().any(|&p| !(p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::contract("prior must be a probability vector"));
        }
        if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("variances must be finite and non-negative"));
        }
        Ok(Self {
            prior,
            means,
            variances,
        })
    }

    pub fn class_count(&self) -> usize {
        self.prior.len()
    }

    pub fn feature_count(&self) -> usize {
        self.variances.len()
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        self.means.row(class)
    }

    /// Fails unless every variance is at least [`VARIANCE_FLOOR`].
    pub fn check_variance_floor(&self) -> Result<()> {
        match self.variances.iter().position(|&v| v < VARIANCE_FLOOR) {
            Some(j) => Err(Error::contract(format!(
                "variance of feature {j} ({}) is below the floor {VARIANCE_FLOOR}",
                self.variances[j]
            ))),
            None => Ok(()),
        }
    }

    /// Variances clamped from below at [`VARIANCE_FLOOR`].
    pub fn floored_variances(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.max(VARIANCE_FLOOR)).collect()
    }
}

/// Uniform prior, means `U[0, 1]`, shared variances `U[0.5, 1.5]`.
pub fn gen_gnb_meta_params(class_count: usize, feature_count: usize, seed: u64) -> Result<GnbParams> {
    if class_count == 0 || feature_count == 0 {
        return Err(Error::contract("need at least one class and one feature"));
    }
    let mut rng = seed::rng(seed);
    let means: Vec<f64> = (0..class_count * feature_count)
        .map(|_| rng.random_range(0.0..=1.0))
        .collect();
    let variances = (0..feature_count).map(|_| rng.random_range(0.5..=1.5)).collect();
    GnbParams::new(
        vec![1.0 / class_count as f64; class_count],
        Tensor2::new(class_count, feature_count, means)?,
        variances,
    )
}

/// Draws exactly `n_per_class` records of every class, ordered by class.
pub fn gen_synthetic(params: &GnbParams, n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::contract("n_per_class must be at least 1"));
    }
    if let Some(j) = params.variances.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::contract(format!("variance of feature {j} is not positive")));
    }
    let mut rng = seed::rng(seed);
    let c = params.class_count();
    let d = params.feature_count();
    let stds: Vec<f64> = params.variances.iter().map(|v| v.sqrt()).collect();
    let mut data = Vec::with_capacity(c * n_per_class * d);
    let mut labels = Vec::with_capacity(c * n_per_class);
    for y in 0..c {
        let mu = params.mean(y);
        for _ in 0..n_per_class {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mu[j] + stds[j] * z);
            }
            labels.push(y);
        }
    }
    LabeledDataset::new(Tensor2::new(labels.len(), d, data)?, labels, c)
}

/// Maximum-likelihood estimates: class frequencies, per-class means, and a
/// variance per feature pooled over all records after centering each on its
/// class mean (denominator `n`).
pub fn fit_gnb_params(data: &LabeledDataset) -> Result<GnbParams> {
    let c = data.class_count();
    let d = data.feature_count();
    let counts = data.class_counts();
    for (class, &n) in counts.iter().enumerate() {
        if n < 2 {
            return Err(Error::Estimation {
                class,
                reason: if n == 0 {
                    "class has no records".into()
                } else {
                    "class needs at least 2 records".into()
                },
            });
        }
    }
    let mut sums = vec![0.0; c * d];
    for (x, y) in data.iter() {
        for (s, v) in sums[y * d..(y + 1) * d].iter_mut().zip(x) {
            *s += v;
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| s / counts[i / d] as f64)
        .collect();
    let mut variances = vec![0.0; d];
    for (x, y) in data.iter() {
        let mu = &means[y * d..(y + 1) * d];
        for ((v, xi), m) in variances.iter_mut().zip(x).zip(mu) {
            *v += (xi - m) * (xi - m);
        }
    }
    let n = data.len() as f64;
    variances.iter_mut().for_each(|v| *v /= n);
    let prior = counts.iter().map(|&k| k as f64 / n).collect();
    GnbParams::new(prior, Tensor2::new(c, d, means)?, variances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_params_follow_the_generator_ranges() {
        let p = gen_gnb_meta_params(10, 75, 4).unwrap();
        assert_eq!(p.prior, vec![0.1; 10]);
        assert!(p.variances.iter().all(|v| (0.5..=1.5).contains(v)));
        assert!(p.means.as_slice().iter().all(|m| (0.0..=1.0).contains(m)));
        assert_eq!(p, gen_gnb_meta_params(10, 75, 4).unwrap());
    }

    #[test]
    fn default_synthetic_has_balanced_classes() {
        let p = gen_gnb_meta_params(10, 75, 1).unwrap();
        let d = gen_synthetic(&p, 40, 2).unwrap();
        assert_eq!(d.len(), 400);
        assert_eq!(d.class_counts(), vec![40; 10]);
        assert_eq!(d.feature_count(), 75);
    }

    #[test]
    fn tiny_variance_collapses_onto_means() {
        let mut p = gen_gnb_meta_params(3, 4, 1).unwrap();
        p.variances = vec![1e-12; 4];
        let d = gen_synthetic(&p, 50, 3).unwrap();
        let fit = fit_gnb_params(&d).unwrap();
        for (a, b) in fit.means.as_slice().iter().zip(p.means.as_slice()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn large_sample_variance_within_five_percent() {
        let p = gen_gnb_meta_params(2, 6, 8).unwrap();
        let d = gen_synthetic(&p, 10_000, 9).unwrap();
        let fit = fit_gnb_params(&d).unwrap();
        for (est, truth) in fit.variances.iter().zip(&p.variances) {
            assert!((est / truth - 1.0).abs() < 0.05, "{est} vs {truth}");
        }
        for (a, b) in fit.means.as_slice().iter().zip(p.means.as_slice()) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn non_positive_variance_rejected() {
        let mut p = gen_gnb_meta_params(2, 2, 0).unwrap();
        p.variances[1] = 0.0;
        assert!(matches!(gen_synthetic(&p, 3, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn two_point_hand_computation() {
        // class 0: {0, 2}; class 1: {5, 5}
        let x = Tensor2::new(4, 1, vec![0.0, 2.0, 5.0, 5.0]).unwrap();
        let d = LabeledDataset::new(x, vec![0, 0, 1, 1], 2).unwrap();
        let fit = fit_gnb_params(&d).unwrap();
        assert_eq!(fit.means.get(0, 0), 1.0);
        assert_eq!(fit.means.get(1, 0), 5.0);
        // pooled: ((0-1)^2 + (2-1)^2 + 0 + 0) / 4
        assert_eq!(fit.variances[0], 0.5);
        let only = LabeledDataset::new(Tensor2::new(2, 1, vec![0.0, 2.0]).unwrap(), vec![0, 0], 1).unwrap();
        let fit = fit_gnb_params(&only).unwrap();
        assert_eq!(fit.means.get(0, 0), 1.0);
        assert_eq!(fit.variances[0], 1.0);
    }

    #[test]
    fn identical_points_give_zero_variance_then_floor() {
        let x = Tensor2::new(4, 2, vec![1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0]).unwrap();
        let d = LabeledDataset::new(x, vec![0, 0, 1, 1], 2).unwrap();
        let fit = fit_gnb_params(&d).unwrap();
        assert_eq!(fit.variances, vec![0.0, 0.0]);
        assert!(fit.check_variance_floor().is_err());
        assert_eq!(fit.floored_variances(), vec![VARIANCE_FLOOR; 2]);
    }

    #[test]
    fn empty_class_is_named() {
        let x = Tensor2::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let d = LabeledDataset::new(x, vec![0, 0, 0], 3).unwrap();
        match fit_gnb_params(&d) {
            Err(Error::Estimation { class, .. }) => assert_eq!(class, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fitted_prior_sums_to_one() {
        let p = gen_gnb_meta_params(7, 3, 5).unwrap();
        let d = gen_synthetic(&p, 13, 6).unwrap();
        let fit = fit_gnb_params(&d.subset(&(0..d.len()).step_by(2).collect::<Vec<_>>())).unwrap();
        assert!((fit.prior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimation_error_shrinks_with_sample_size() {
        let p = gen_gnb_meta_params(3, 5, 17).unwrap();
        let mean_error = |n: usize| -> f64 {
            (0..8)
                .map(|s| {
                    let fit = fit_gnb_params(&gen_synthetic(&p, n, 100 + s).unwrap()).unwrap();
                    fit.means
                        .as_slice()
                        .iter()
                        .zip(p.means.as_slice())
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
        };
        let errs: Vec<f64> = [100, 1_000, 10_000].iter().map(|&n| mean_error(n)).collect();
        assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
    }
}
