//! Data sets: synthetic Gaussian naive-Bayes generation, estimation,
//! splitting, resampling and CSV ingestion.

mod csv_loader;
mod dataset;
mod gnb;
mod split;

pub use csv_loader::{load_csv, CsvDataset, LabelColumn};
pub use dataset::{LabeledDataset, Standardizer};
pub use gnb::{fit_gnb_params, gen_gnb_meta_params, gen_synthetic, GnbParams, VARIANCE_FLOOR};
pub use split::{bootstrap_sample, random_halves, subsample, split_dataset, Split, SplitSpec};
