//! Versioned JSON model container.
//!
//! ```json
//! {"version": 1, "layers": [{"rows": 75, "cols": 10, "weights": [...],
//!   "biases": [...], "activation": "softmax"}]}
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! value-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, Network, Tensor2};
use crate::{Error, Provenance, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerDocument {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    version: u32,
    layers: Vec<LayerDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl From<&Network> for ModelDocument {
    fn from(net: &Network) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            layers: net
                .layers()
                .iter()
                .map(|l| LayerDocument {
                    rows: l.input_dim(),
                    cols: l.output_dim(),
                    weights: l.weights().as_slice().to_vec(),
                    biases: l.biases().to_vec(),
                    activation: l.activation(),
                })
                .collect(),
            provenance: None,
        }
    }
}

impl TryFrom<ModelDocument> for Network {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.version
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| DenseLayer::new(Tensor2::new(l.rows, l.cols, l.weights)?, l.biases, l.activation))
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(d)?;
        Network::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
        let mut doc = ModelDocument::from(self);
        doc.provenance = provenance.cloned();
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_value_exact(seed in any::<u64>(), scale in -1e6f64..1e6) {
            let mut net = Network::random(&[3, 4, 2], &[Activation::Relu, Activation::Softmax], seed).unwrap();
            let p: Vec<f64> = net.params().iter().map(|v| v * scale + 1e-300).collect();
            net.set_params(&p).unwrap();
            let back = Network::from_json(&net.to_json().unwrap()).unwrap();
            let q = back.params();
            prop_assert!(p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let net = Network::random(&[2, 2], &[Activation::Softmax], 0).unwrap();
        let text = net.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(Network::from_json(&text).is_err());
    }

    #[test]
    fn document_layout() {
        let net = Network::random(&[2, 3], &[Activation::Softmax], 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&net.to_json().unwrap()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["layers"][0]["rows"], 2);
        assert_eq!(v["layers"][0]["cols"], 3);
        assert_eq!(v["layers"][0]["activation"], "softmax");
        assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 6);
    }
}
