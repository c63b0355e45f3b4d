use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Membership-game metrics. `advantage` is always exactly `2·accuracy − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub advantage: f64,
    /// `TP / (TP + FP)`, or 1/2 when nothing is predicted positive.
    pub precision: f64,
    /// `TP / P`, or 0 when there are no positives.
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl Metrics {
    pub fn predicted_positive(&self) -> usize {
        self.true_positives + self.false_positives
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

pub fn compute_metrics(predictions: &[bool], truth: &[bool]) -> Result<Metrics> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs truth",
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::contract("no records to score"));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / truth.len() as f64;
    let precision = if tp + fp == 0 {
        0.5
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fneg == 0 {
        0.0
    } else {
        tp as f64 / (tp + fneg) as f64
    };
    Ok(Metrics {
        accuracy,
        advantage: 2.0 * accuracy - 1.0,
        precision,
        recall,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fneg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(n: usize) -> Vec<bool> {
        (0..2 * n).map(|i| i < n).collect()
    }

    #[test]
    fn all_negative_predictions() {
        let m = compute_metrics(&[false; 6], &balanced(3)).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn all_positive_predictions() {
        let m = compute_metrics(&[true; 6], &balanced(3)).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.advantage, 0.0);
    }

    #[test]
    fn advantage_of_0_618() {
        // 618 of 1000 correct
        let truth = balanced(500);
        let pred: Vec<bool> = (0..1000).map(|i| if i < 309 { true } else { i >= 809 }).collect();
        let m = compute_metrics(&pred, &truth).unwrap();
        assert!((m.accuracy - 0.618).abs() < 1e-15);
        assert!((m.advantage - 0.236).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_metrics(&[true], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn identities(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &t).unwrap();
            prop_assert_eq!(m.advantage, 2.0 * m.accuracy - 1.0);
            prop_assert!((0.0..=1.0).contains(&m.precision));
            prop_assert!((0.0..=1.0).contains(&m.recall));
            prop_assert_eq!(m.total(), t.len());
        }
    }
}
