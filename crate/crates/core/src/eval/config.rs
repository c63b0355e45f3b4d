use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{GeneralWbConfig, MetaConfig, ProxyConfig, ShadowConfig};
use crate::data::{
    gen_gnb_meta_params, gen_synthetic, load_csv, GnbParams, LabelColumn, LabeledDataset, SplitSpec, Standardizer,
};
use crate::influence::DEFAULT_STEPS;
use crate::target::TargetSpec;
#[cfg(test)]
use crate::nn::OptimizerConfig;
use crate::{seed, Error, Provenance, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Balanced Gaussian naive-Bayes data generated from the master seed.
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_features")]
        features: usize,
        records: usize,
    },
    Csv {
        path: PathBuf,
        label_column: LabelColumn,
        #[serde(default = "yes")]
        has_header: bool,
    },
    /// A data set file as written by `gen-data`.
    Json { path: PathBuf },
}

fn default_classes() -> usize {
    10
}
fn default_features() -> usize {
    75
}
fn yes() -> bool {
    true
}
fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_repetitions() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    Naive,
    /// Oracle attack; synthetic data only.
    Omniscient,
    BayesWb {
        #[serde(default)]
        proxies: ProxyConfig,
        /// Slice to attack; `None` attacks the final layer.
        #[serde(default)]
        slice: Option<usize>,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    GeneralWb(GeneralWbConfig),
    Meta(MetaConfig),
    ShadowBb(ShadowConfig),
}

impl AttackKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AttackKind::Naive => "naive",
            AttackKind::Omniscient => "omniscient",
            AttackKind::BayesWb { .. } => "bayes_wb",
            AttackKind::GeneralWb(_) => "general_wb",
            AttackKind::Meta(_) => "meta",
            AttackKind::ShadowBb(_) => "shadow_bb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Report label; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self { name: None, kind }
    }

    pub fn named(name: &str, kind: AttackKind) -> Self {
        Self {
            name: Some(name.to_string()),
            kind,
        }
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub test: f64,
    pub holdout: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.25,
            test: 0.25,
            holdout: 0.5,
        }
    }
}

impl SplitFractions {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_frac: self.train,
            test_frac: self.test,
            holdout_frac: self.holdout,
            seed,
        }
    }
}

/// One experiment: data, target recipe, attacks, calibration levels and
/// repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Standardize features using statistics of the whole data set.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub target: TargetSpec,
    pub attacks: Vec<AttackSpec>,
    /// Calibration tolerances evaluated in addition to the default 1/2.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Holdout records used for calibration; `None` uses all of them.
    #[serde(default)]
    pub calibration_sample_size: Option<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
}

/// Minimum number of successful repetitions for a run to count.
pub const MIN_REPETITIONS: usize = 3;

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Paths in the dataset source are resolved against `base` when
    /// relative.
    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.dataset {
            DatasetSource::Csv { path, .. } | DatasetSource::Json { path } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetSource::Synthetic {
                classes,
                features,
                records,
            } => {
                if *classes == 0 {
                    return Err(config_err("dataset.classes", "must be at least 1"));
                }
                if *features == 0 {
                    return Err(config_err("dataset.features", "must be at least 1"));
                }
                if *records == 0 || records % classes != 0 {
                    return Err(config_err("dataset.records", "must be a positive multiple of dataset.classes"));
                }
            }
            DatasetSource::Csv { path, .. } | DatasetSource::Json { path } => {
                if !path.is_file() {
                    return Err(config_err("dataset.path", format!("{} does not exist", path.display())));
                }
            }
        }
        self.split
            .spec(0)
            .validate()
            .map_err(|e| config_err("split", e))?;
        if self.split.train != self.split.test {
            return Err(config_err("split", "train and test fractions must be equal (balanced membership game)"));
        }
        self.target
            .optimizer
            .validate()
            .map_err(|e| config_err("target.optimizer", e))?;
        if let crate::target::Architecture::MlpOneHidden { hidden: Some(0) } = self.target.architecture {
            return Err(config_err("target.architecture.hidden", "must be at least 1"));
        }
        if self.attacks.is_empty() {
            return Err(config_err("attacks", "at least one attack is required"));
        }
        let mut names = std::collections::HashSet::new();
        for (i, a) in self.attacks.iter().enumerate() {
            let field = format!("attacks[{i}]");
            if !names.insert(a.label().to_string()) {
                return Err(config_err(&field, format!("duplicate attack name {:?}", a.label())));
            }
            match &a.kind {
                AttackKind::Omniscient if !matches!(self.dataset, DatasetSource::Synthetic { .. }) => {
                    return Err(config_err(&field, "omniscient needs a synthetic dataset"));
                }
                AttackKind::Omniscient if self.standardize => {
                    return Err(config_err(&field, "omniscient cannot run on standardized data"));
                }
                AttackKind::BayesWb { proxies, steps, .. } => {
                    if proxies.count == 0 {
                        return Err(config_err(&format!("{field}.proxies.count"), "must be at least 1"));
                    }
                    if *steps == 0 {
                        return Err(config_err(&format!("{field}.steps"), "must be at least 1"));
                    }
                }
                AttackKind::GeneralWb(g) => g.validate().map_err(|e| config_err(&field, e))?,
                AttackKind::Meta(m) => {
                    if m.splits == 0 || m.proxies.count == 0 || m.steps == 0 {
                        return Err(config_err(&field, "splits, proxies.count and steps must be at least 1"));
                    }
                    m.optimizer.validate().map_err(|e| config_err(&format!("{field}.optimizer"), e))?;
                }
                AttackKind::ShadowBb(s) => {
                    if s.shadows == 0 {
                        return Err(config_err(&format!("{field}.shadows"), "must be at least 1"));
                    }
                    s.optimizer.validate().map_err(|e| config_err(&format!("{field}.optimizer"), e))?;
                }
                _ => {}
            }
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(config_err(&format!("alphas[{i}]"), "must lie in [0, 1]"));
            }
        }
        if self.calibration_sample_size == Some(0) {
            return Err(config_err("calibration_sample_size", "must be at least 1"));
        }
        if self.repetitions < MIN_REPETITIONS {
            return Err(config_err("repetitions", format!("must be at least {MIN_REPETITIONS}")));
        }
        Ok(())
    }

    /// Normalized JSON form: defaults filled in, fixed field order.
    pub fn normalized_json(&self) -> String {
        serde_json::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the normalized JSON, lowercase hex.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.normalized_json().as_bytes()))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config_hash(),
            master_seed: self.master_seed,
        }
    }

    /// Loads or generates the data set. Synthetic sources also return the
    /// generating parameters.
    pub fn load_dataset(&self) -> Result<(LabeledDataset, Option<GnbParams>)> {
        let (data, truth) = match &self.dataset {
            DatasetSource::Synthetic {
                classes,
                features,
                records,
            } => {
                let params = gen_gnb_meta_params(
                    *classes,
                    *features,
                    seed::derive(self.master_seed, seed::tag::GNB_PARAMS, 0),
                )?;
                let data = gen_synthetic(
                    &params,
                    records / classes,
                    seed::derive(self.master_seed, seed::tag::GNB_SAMPLES, 0),
                )?;
                (data, Some(params))
            }
            DatasetSource::Csv {
                path,
                label_column,
                has_header,
            } => (load_csv(path, label_column, *has_header)?.dataset, None),
            DatasetSource::Json { path } => (LabeledDataset::load(path)?, None),
        };
        if self.standardize {
            let st = Standardizer::fit(&data)?;
            // generator parameters no longer describe standardized data
            return Ok((st.apply(&data)?, None));
        }
        Ok((data, truth))
    }
}
