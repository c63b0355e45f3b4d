#![allow(dead_code)]

use wbmia::attacks::MembershipAttack;
use wbmia::data::{gen_gnb_meta_params, gen_synthetic, split_dataset, GnbParams, Split, SplitSpec};
use wbmia::eval::{compute_metrics, Metrics};
use wbmia::seed;

/// A synthetic GNB data set split ¼ / ¼ / ½.
pub struct Instance {
    pub truth: GnbParams,
    pub split: Split,
}

pub fn gnb_instance(classes: usize, features: usize, records: usize, master: u64) -> Instance {
    let truth = gen_gnb_meta_params(classes, features, seed::derive(master, seed::tag::GNB_PARAMS, 0)).unwrap();
    let data = gen_synthetic(&truth, records / classes, seed::derive(master, seed::tag::GNB_SAMPLES, 0)).unwrap();
    let split = split_dataset(&data, &SplitSpec::with_seed(seed::derive(master, seed::tag::SPLIT, 0))).unwrap();
    Instance { truth, split }
}

/// Members = train, non-members = test, decision `confidence > 1/2`.
pub fn metrics(attack: &dyn MembershipAttack, split: &Split) -> Metrics {
    let mut predictions: Vec<bool> = attack.confidences(&split.train).unwrap().iter().map(|&c| c > 0.5).collect();
    predictions.extend(attack.confidences(&split.test).unwrap().iter().map(|&c| c > 0.5));
    let truth: Vec<bool> = (0..predictions.len()).map(|i| i < split.train.len()).collect();
    compute_metrics(&predictions, &truth).unwrap()
}

pub fn accuracy(attack: &dyn MembershipAttack, split: &Split) -> f64 {
    metrics(attack, split).accuracy
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
