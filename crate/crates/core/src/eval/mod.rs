//! Threshold calibration, membership metrics and the repeated experiment
//! protocol.

mod calibrate;
mod config;
mod experiment;
mod metrics;
mod sweep;

pub use calibrate::{calibrate_thresholds, predict_thresholded, thresholds_from_confidences, Thresholds};
pub use config::{AttackKind, AttackSpec, DatasetSource, ExperimentConfig, SplitFractions, MIN_REPETITIONS};
pub use experiment::{
    build_attack, evaluate_attack, run_experiment, run_repetition, split_seed, write_reports_csv, EvalReport, ExperimentReport, MeanStd,
    OracleKnowledge, RepetitionFailure, RepetitionResult, SummaryRow,
};
pub use metrics::{compute_metrics, Metrics};
pub use sweep::{run_sweep, SweepCell, SweepGrid, SweepReport, SweepRow};
