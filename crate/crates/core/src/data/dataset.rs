use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::Tensor2;
use crate::{Error, Provenance, Result};

/// Feature matrix plus integer class labels in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Tensor2,
    labels: Vec<usize>,
    class_count: usize,
}

/// JSON container `{features, labels, class_count}` with rows as arrays.
#[derive(Serialize, Deserialize)]
struct DatasetDocument {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl LabeledDataset {
    pub fn new(features: Tensor2, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                context: "label vector",
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::contract(format!("label {bad} out of range for {class_count} classes")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn record(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features.iter_rows().zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order (duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Concatenates two data sets with the same schema.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.feature_count() != other.feature_count() || self.class_count != other.class_count {
            return Err(Error::contract("cannot concatenate data sets with different schemas"));
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(Tensor2::new(labels.len(), self.feature_count(), data)?, labels, self.class_count)
    }

    /// Replaces every feature row by `f(row)`, keeping labels.
    pub fn map_features<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let rows = self
            .features
            .iter_rows()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        let features = if rows.is_empty() {
            Tensor2::zeros(0, 0)
        } else {
            Tensor2::from_rows(&rows)?
        };
        Self::new(features, self.labels.clone(), self.class_count)
    }

    pub fn to_json(&self, provenance: Option<&Provenance>) -> Result<String> {
        let doc = DatasetDocument {
            features: self.features.iter_rows().map(<[f64]>::to_vec).collect(),
            labels: self.labels.clone(),
            class_count: self.class_count,
            provenance: provenance.cloned(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDocument = serde_json::from_str(text)?;
        let cols = doc.features.first().map_or(0, Vec::len);
        let features = if doc.features.is_empty() {
            Tensor2::zeros(0, cols)
        } else {
            Tensor2::from_rows(&doc.features)?
        };
        Self::new(features, doc.labels, doc.class_count)
    }

    pub fn save(&self, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
        std::fs::write(path, self.to_json(provenance)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-feature affine standardization fitted on one data set and applied to
/// others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Zero mean, unit variance on `data`. Constant features keep scale 1.
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::contract("cannot standardize on an empty data set"));
        }
        let n = data.len() as f64;
        let d = data.feature_count();
        let mut means = vec![0.0; d];
        for (x, _) in data.iter() {
            for (m, v) in means.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut vars = vec![0.0; d];
        for (x, _) in data.iter() {
            for ((s, v), m) in vars.iter_mut().zip(x).zip(&means) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scales = vars
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { means, scales })
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        data.map_features(|x| {
            Ok(x.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .map(|((v, m), s)| (v - m) / s)
                .collect())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        LabeledDataset::new(x, vec![0, 1, 0], 2).unwrap()
    }

    #[test]
    fn labels_must_be_in_range() {
        let x = Tensor2::zeros(2, 1);
        assert!(LabeledDataset::new(x, vec![0, 2], 2).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = tiny();
        let back = LabeledDataset::from_json(&d.to_json(None).unwrap()).unwrap();
        assert_eq!(back, d);
        let v: serde_json::Value = serde_json::from_str(&d.to_json(None).unwrap()).unwrap();
        assert_eq!(v["class_count"], 2);
        assert_eq!(v["features"][1][0], 3.0);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let d = tiny();
        let s = Standardizer::fit(&d).unwrap();
        let z = s.apply(&d).unwrap();
        for j in 0..2 {
            let col = z.features().column(j);
            let mean: f64 = col.iter().sum::<f64>() / 3.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn subset_keeps_order_and_duplicates() {
        let d = tiny();
        let s = d.subset(&[2, 2, 0]);
        assert_eq!(s.labels(), &[0, 0, 0]);
        assert_eq!(s.features().row(1), &[5.0, 6.0]);
    }
}
