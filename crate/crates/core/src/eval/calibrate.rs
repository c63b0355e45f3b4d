use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::attacks::MembershipAttack;
use crate::data::LabeledDataset;
use crate::{seed, Error, Result};

/// Per-class decision thresholds calibrated at tolerance `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha: f64,
    pub per_class: Vec<f64>,
}

impl Thresholds {
    /// Decision `confidence > τ_y`.
    pub fn decide(&self, confidence: f64, y: usize) -> Result<bool> {
        let tau = self
            .per_class
            .get(y)
            .ok_or_else(|| Error::contract(format!("class {y} has no threshold")))?;
        Ok(confidence > *tau)
    }
}

/// `τ_y` = the ascending-sorted class-`y` confidences at index
/// `min(⌊α·n_y⌋, n_y − 1)`.
pub fn thresholds_from_confidences(confidences: &[f64], labels: &[usize], classes: usize, alpha: f64) -> Result<Thresholds> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    if confidences.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "calibration confidences",
            expected: labels.len(),
            got: confidences.len(),
        });
    }
    let mut by_class: Vec<Vec<f64>> = vec![Vec::new(); classes];
    for (&c, &y) in confidences.iter().zip(labels) {
        by_class
            .get_mut(y)
            .ok_or_else(|| Error::contract(format!("label {y} out of range")))?
            .push(c);
    }
    let per_class = by_class
        .into_iter()
        .enumerate()
        .map(|(class, mut v)| {
            if v.is_empty() {
                return Err(Error::Calibration {
                    class,
                    reason: "no records of this class in the calibration sample".into(),
                });
            }
            v.sort_by(f64::total_cmp);
            let idx = ((alpha * v.len() as f64).floor() as usize).min(v.len() - 1);
            Ok(v[idx])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Thresholds { alpha, per_class })
}

/// Calibrates against `holdout` records treated as non-members: all of them,
/// or a seeded sample of `sample_size` without replacement.
pub fn calibrate_thresholds(
    attack: &dyn MembershipAttack,
    holdout: &LabeledDataset,
    alpha: f64,
    sample_size: Option<usize>,
    seed: u64,
) -> Result<Thresholds> {
    let sample = calibration_sample(holdout, sample_size, seed)?;
    let conf = attack.confidences(&sample)?;
    thresholds_from_confidences(&conf, sample.labels(), holdout.class_count(), alpha)
}

pub(crate) fn calibration_sample(holdout: &LabeledDataset, sample_size: Option<usize>, seed: u64) -> Result<LabeledDataset> {
    match sample_size {
        None => Ok(holdout.clone()),
        Some(n) if n > holdout.len() => Err(Error::contract(format!(
            "calibration sample of {n} exceeds the {} available records",
            holdout.len()
        ))),
        Some(n) => {
            let mut rng = seed::rng(seed::derive(seed, seed::tag::CALIBRATION, 0));
            let mut idx = sample(&mut rng, holdout.len(), n).into_vec();
            idx.sort_unstable();
            Ok(holdout.subset(&idx))
        }
    }
}

pub fn predict_thresholded(attack: &dyn MembershipAttack, x: &[f64], y: usize, thresholds: &Thresholds) -> Result<bool> {
    thresholds.decide(attack.confidence(x, y)?, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_arithmetic() {
        let conf: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let t = thresholds_from_confidences(&conf, &[0; 10], 1, 0.9).unwrap();
        assert_eq!(t.per_class, vec![1.0]);
        let t = thresholds_from_confidences(&conf, &[0; 10], 1, 0.0).unwrap();
        assert_eq!(t.per_class, vec![0.1]);
        let t = thresholds_from_confidences(&conf, &[0; 10], 1, 1.0).unwrap();
        assert_eq!(t.per_class, vec![1.0]);
    }

    #[test]
    fn strict_comparison() {
        let t = Thresholds {
            alpha: 0.5,
            per_class: vec![0.7, 0.0],
        };
        assert!(!t.decide(0.7, 0).unwrap());
        assert!(t.decide(0.7000001, 0).unwrap());
        assert!(t.decide(1e-12, 1).unwrap());
    }

    #[test]
    fn empty_class_is_an_error() {
        assert!(matches!(
            thresholds_from_confidences(&[0.4, 0.6], &[0, 0], 2, 0.5),
            Err(Error::Calibration { class: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn monotone_in_alpha(conf in prop::collection::vec(0.0f64..1.0, 1..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let labels = vec![0; conf.len()];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t_lo = thresholds_from_confidences(&conf, &labels, 1, lo).unwrap();
            let t_hi = thresholds_from_confidences(&conf, &labels, 1, hi).unwrap();
            prop_assert!(t_hi.per_class[0] >= t_lo.per_class[0]);
        }

        #[test]
        fn positive_rate_near_one_minus_alpha(conf in prop::collection::hash_set(0u32..1_000_000, 50..300), alpha in 0.0f64..1.0) {
            let conf: Vec<f64> = conf.into_iter().map(|c| c as f64 / 1e6).collect();
            let labels = vec![0; conf.len()];
            let t = thresholds_from_confidences(&conf, &labels, 1, alpha).unwrap();
            let rate = conf.iter().filter(|&&c| c > t.per_class[0]).count() as f64 / conf.len() as f64;
            prop_assert!((rate - (1.0 - alpha)).abs() <= 2.0 / conf.len() as f64 + 1e-12);
        }
    }
}
