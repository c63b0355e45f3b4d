use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::{seed, Error, Result};

/// Fractions of the train / test / hold-out partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub test_frac: f64,
    pub holdout_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.25,
            test_frac: 0.25,
            holdout_frac: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.test_frac, self.holdout_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Split("fractions must lie in [0, 1] and sum to 1".into()));
        }
        Ok(())
    }
}

/// Disjoint partition of a data set. Index vectors refer to the input rows.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub holdout: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

/// Seeded shuffle, then `⌊n·train⌋` train rows, `⌊n·test⌋` test rows and the
/// remainder as hold-out.
pub fn split_dataset(data: &LabeledDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = data.len();
    let n_train = (n as f64 * spec.train_frac).floor() as usize;
    let n_test = (n as f64 * spec.test_frac).floor() as usize;
    if n_train == 0 || n_test == 0 || n_train + n_test >= n {
        return Err(Error::Split(format!(
            "{n} records are too few for a non-empty train/test/hold-out split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(spec.seed));
    let train_indices = order[..n_train].to_vec();
    let test_indices = order[n_train..n_train + n_test].to_vec();
    let holdout_indices = order[n_train + n_test..].to_vec();
    Ok(Split {
        train: data.subset(&train_indices),
        test: data.subset(&test_indices),
        holdout: data.subset(&holdout_indices),
        train_indices,
        test_indices,
        holdout_indices,
    })
}

/// `size` rows drawn uniformly with replacement.
pub fn bootstrap_sample(data: &LabeledDataset, size: usize, seed: u64) -> Result<LabeledDataset> {
    if size == 0 {
        return Err(Error::contract("bootstrap size must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::contract("cannot bootstrap from an empty data set"));
    }
    let mut rng = seed::rng(seed);
    let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..data.len())).collect();
    Ok(data.subset(&idx))
}

/// `size` distinct rows drawn uniformly without replacement, in drawn order.
pub fn subsample(data: &LabeledDataset, size: usize, seed: u64) -> Result<LabeledDataset> {
    if size == 0 || size > data.len() {
        return Err(Error::contract(format!(
            "subsample size {size} must lie in 1..={}",
            data.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let idx = rand::seq::index::sample(&mut rng, data.len(), size).into_vec();
    Ok(data.subset(&idx))
}

/// Random "in" / "out" halves; the "in" half gets `⌊n/2⌋` rows.
pub fn random_halves(data: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Split(format!("{n} records cannot be halved")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let half = n / 2;
    Ok((data.subset(&order[..half]), data.subset(&order[half..])))
}
