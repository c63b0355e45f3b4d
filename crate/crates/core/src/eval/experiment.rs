use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::{calibration_sample, thresholds_from_confidences};
use super::config::{AttackKind, ExperimentConfig, MIN_REPETITIONS};
use super::metrics::{compute_metrics, Metrics};
use crate::attacks::{
    bayes_wb_deep, bayes_wb_linear, general_wb_train, meta_train, omniscient_model, shadow_bb_train, AttackModel,
    MembershipAttack, NaiveAttack,
};
use crate::data::{fit_gnb_params, split_dataset, GnbParams, LabeledDataset, Split};
use crate::influence::Slice;
use crate::nn::Network;
use crate::target::{evaluate_model, TargetSpec};
use crate::{seed, Error, Provenance, Result};

/// Knowledge only the omniscient oracle is given: true and empirical GNB
/// parameters.
#[derive(Debug, Clone)]
pub struct OracleKnowledge {
    pub truth: GnbParams,
    pub empirical: GnbParams,
}

/// Builds one attack against `target`. Apart from the oracle, the only data
/// an attack sees is `holdout`.
pub fn build_attack(
    kind: &AttackKind,
    target: &Network,
    holdout: &LabeledDataset,
    spec: &TargetSpec,
    oracle: Option<&OracleKnowledge>,
    seed: u64,
) -> Result<AttackModel> {
    Ok(match kind {
        AttackKind::Naive => AttackModel::Naive(NaiveAttack { target: target.clone() }),
        AttackKind::Omniscient => {
            let o = oracle.ok_or_else(|| Error::contract("omniscient attack needs oracle knowledge"))?;
            AttackModel::Omniscient(omniscient_model(&o.truth, &o.empirical)?)
        }
        AttackKind::BayesWb { proxies, slice, steps } => {
            let slice = match slice {
                Some(l) => Slice::new(target, *l)?,
                None => Slice::top(target),
            };
            if target.layer_count() == 1 {
                AttackModel::BayesWb(bayes_wb_linear(target, holdout, proxies, spec, seed)?)
            } else {
                AttackModel::BayesWbDeep(bayes_wb_deep(target, slice, holdout, proxies, spec, *steps, seed)?)
            }
        }
        AttackKind::GeneralWb(cfg) => AttackModel::GeneralWb(general_wb_train(target, holdout, spec, cfg, seed)?),
        AttackKind::Meta(cfg) => AttackModel::Meta(meta_train(spec, target, holdout, cfg, seed)?),
        AttackKind::ShadowBb(cfg) => AttackModel::ShadowBb(shadow_bb_train(spec, target, holdout, cfg, seed)?),
    })
}

/// One evaluated (attack, repetition, threshold) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attack: String,
    pub repetition: usize,
    /// `None` for the default threshold 1/2.
    pub alpha: Option<f64>,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub members: usize,
    pub non_members: usize,
    /// Per-class thresholds when calibrated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    pub split_seed: u64,
    pub attack_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub split_seed: u64,
    pub target_train_accuracy: f64,
    pub target_test_accuracy: f64,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionFailure {
    pub repetition: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub attack: String,
    pub alpha: Option<f64>,
    pub repetitions: usize,
    pub accuracy: MeanStd,
    pub advantage: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub repetitions_requested: usize,
    pub results: Vec<RepetitionResult>,
    pub failures: Vec<RepetitionFailure>,
    pub target_train_accuracy: MeanStd,
    pub target_test_accuracy: MeanStd,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn reports(&self) -> impl Iterator<Item = &EvalReport> {
        self.results.iter().flat_map(|r| r.reports.iter())
    }

    pub fn summary_for(&self, attack: &str, alpha: Option<f64>) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.attack == attack && s.alpha == alpha)
    }

    /// Results CSV: one row per report, provenance in trailing columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_reports_csv(self.reports(), &self.provenance, out)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Writes `reports` as the results CSV: one row per report, provenance in
/// the trailing columns.
pub fn write_reports_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a EvalReport>,
    provenance: &Provenance,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "attack",
        "repetition",
        "alpha",
        "accuracy",
        "advantage",
        "precision",
        "recall",
        "config_hash",
        "master_seed",
    ])?;
    for r in reports {
        w.write_record([
            r.attack.clone(),
            r.repetition.to_string(),
            r.alpha.map_or_else(|| "default".to_string(), |a| a.to_string()),
            r.metrics.accuracy.to_string(),
            r.metrics.advantage.to_string(),
            r.metrics.precision.to_string(),
            r.metrics.recall.to_string(),
            provenance.config_hash.clone(),
            provenance.master_seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Split seed of repetition `rep`.
pub fn split_seed(master: u64, rep: usize) -> u64 {
    seed::derive(master, seed::tag::SPLIT, rep as u64)
}

/// Scores `attack` on members (`split.train`) against non-members
/// (`split.test`) at 1/2 and at each calibrated alpha.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_attack(
    name: &str,
    attack: &dyn MembershipAttack,
    split: &Split,
    alphas: &[f64],
    calibration_sample_size: Option<usize>,
    repetition: usize,
    split_seed: u64,
    attack_seed: u64,
) -> Result<Vec<EvalReport>> {
    let mut confidences = attack.confidences(&split.train)?;
    confidences.extend(attack.confidences(&split.test)?);
    let labels: Vec<usize> = split.train.labels().iter().chain(split.test.labels()).copied().collect();
    let truth: Vec<bool> = (0..confidences.len()).map(|i| i < split.train.len()).collect();
    let report = |alpha: Option<f64>, predictions: Vec<bool>, thresholds: Option<Vec<f64>>| -> Result<EvalReport> {
        Ok(EvalReport {
            attack: name.to_string(),
            repetition,
            alpha,
            metrics: compute_metrics(&predictions, &truth)?,
            members: split.train.len(),
            non_members: split.test.len(),
            thresholds,
            split_seed,
            attack_seed,
        })
    };
    let mut out = vec![report(None, confidences.iter().map(|&c| c > 0.5).collect(), None)?];
    if !alphas.is_empty() {
        let sample = calibration_sample(&split.holdout, calibration_sample_size, attack_seed)?;
        let cal = attack.confidences(&sample)?;
        for &alpha in alphas {
            let t = thresholds_from_confidences(&cal, sample.labels(), split.holdout.class_count(), alpha)?;
            let predictions = confidences
                .iter()
                .zip(&labels)
                .map(|(&c, &y)| t.decide(c, y))
                .collect::<Result<Vec<_>>>()?;
            out.push(report(Some(alpha), predictions, Some(t.per_class))?);
        }
    }
    Ok(out)
}

/// One repetition: fresh split, target trained on the train part, every
/// attack built from the holdout part and scored.
pub fn run_repetition(
    config: &ExperimentConfig,
    data: &LabeledDataset,
    truth: Option<&GnbParams>,
    repetition: usize,
) -> Result<RepetitionResult> {
    let s_seed = split_seed(config.master_seed, repetition);
    let split = split_dataset(data, &config.split.spec(s_seed)).map_err(|e| Error::Split(e.to_string()))?;
    let target = config
        .target
        .train(&split.train, seed::derive(config.master_seed, seed::tag::TARGET, repetition as u64))?;
    let train_eval = evaluate_model(&target, &split.train)?;
    let test_eval = evaluate_model(&target, &split.test)?;
    let needs_oracle = config.attacks.iter().any(|a| a.kind == AttackKind::Omniscient);
    let oracle = match (truth, needs_oracle) {
        (Some(t), true) => Some(OracleKnowledge {
            truth: t.clone(),
            empirical: fit_gnb_params(&split.train)?,
        }),
        _ => None,
    };
    let rep_seed = seed::derive(config.master_seed, seed::tag::REPETITION, repetition as u64);
    let mut reports = Vec::new();
    for (i, spec) in config.attacks.iter().enumerate() {
        let attack_seed = seed::derive(rep_seed, seed::tag::ATTACK, i as u64);
        let attack = build_attack(&spec.kind, &target, &split.holdout, &config.target, oracle.as_ref(), attack_seed)?;
        reports.extend(evaluate_attack(
            spec.label(),
            &attack,
            &split,
            &config.alphas,
            config.calibration_sample_size,
            repetition,
            s_seed,
            attack_seed,
        )?);
    }
    Ok(RepetitionResult {
        repetition,
        split_seed: s_seed,
        target_train_accuracy: train_eval.accuracy,
        target_test_accuracy: test_eval.accuracy,
        reports,
    })
}

fn summarize(config: &ExperimentConfig, results: &[RepetitionResult]) -> Vec<SummaryRow> {
    let alphas: Vec<Option<f64>> = std::iter::once(None).chain(config.alphas.iter().map(|&a| Some(a))).collect();
    let mut rows = Vec::new();
    for spec in &config.attacks {
        for &alpha in &alphas {
            let picked: Vec<&Metrics> = results
                .iter()
                .flat_map(|r| &r.reports)
                .filter(|r| r.attack == spec.label() && r.alpha == alpha)
                .map(|r| &r.metrics)
                .collect();
            let col = |f: fn(&Metrics) -> f64| MeanStd::of(&picked.iter().map(|m| f(m)).collect::<Vec<_>>());
            rows.push(SummaryRow {
                attack: spec.label().to_string(),
                alpha,
                repetitions: picked.len(),
                accuracy: col(|m| m.accuracy),
                advantage: col(|m| m.advantage),
                precision: col(|m| m.precision),
                recall: col(|m| m.recall),
            });
        }
    }
    rows
}

/// Runs every repetition (up to `jobs` in parallel), tolerating individual
/// failures as long as at least three succeed.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let (data, truth) = config.load_dataset()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(usize, Result<RepetitionResult>)> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| {
                log::info!("repetition {rep}: start");
                let r = run_repetition(config, &data, truth.as_ref(), rep);
                log::info!("repetition {rep}: {}", if r.is_ok() { "done" } else { "failed" });
                (rep, r)
            })
            .collect()
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                log::warn!("repetition {rep} aborted: {e}");
                failures.push(RepetitionFailure {
                    repetition: rep,
                    error: e.to_string(),
                });
            }
        }
    }
    if results.len() < MIN_REPETITIONS {
        let first = failures.first().map_or_else(String::new, |f| format!("; first error: {}", f.error));
        return Err(Error::Experiment(format!(
            "only {} of {} repetitions succeeded (need {MIN_REPETITIONS}){first}",
            results.len(),
            config.repetitions
        )));
    }
    let train_acc: Vec<f64> = results.iter().map(|r| r.target_train_accuracy).collect();
    let test_acc: Vec<f64> = results.iter().map(|r| r.target_test_accuracy).collect();
    Ok(ExperimentReport {
        provenance: config.provenance(),
        repetitions_requested: config.repetitions,
        summary: summarize(config, &results),
        target_train_accuracy: MeanStd::of(&train_acc),
        target_test_accuracy: MeanStd::of(&test_acc),
        results,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"dataset": {"source": "synthetic", "classes": 3, "features": 6, "records": 120},
                "attacks": [{"kind": "naive"}, {"kind": "omniscient"},
                            {"kind": "bayes_wb", "proxies": {"count": 2}}],
                "alphas": [0.5, 0.9], "repetitions": 3, "master_seed": 7}"#,
        )
        .unwrap()
    }

    #[test]
    fn advantage_identity_and_balance() {
        let report = run_experiment(&small_config(), 1).unwrap();
        assert_eq!(report.results.len(), 3);
        for r in report.reports() {
            assert_eq!(r.metrics.advantage, 2.0 * r.metrics.accuracy - 1.0);
            assert_eq!(r.members, r.non_members);
        }
        assert_eq!(report.summary.len(), 9);
    }

    #[test]
    fn naive_advantage_is_generalization_gap() {
        let report = run_experiment(&small_config(), 1).unwrap();
        for rep in &report.results {
            let naive = rep.reports.iter().find(|r| r.attack == "naive" && r.alpha.is_none()).unwrap();
            let m = &naive.metrics;
            // TP = correct train records, TN = misclassified test records
            let n = naive.members as f64;
            let gap = m.true_positives as f64 / n - (naive.non_members - m.true_negatives) as f64 / n;
            // in counts: correct guesses − n = train hits − test hits
            assert_eq!(
                (m.true_positives + m.true_negatives) as i64 - naive.members as i64,
                m.true_positives as i64 - (naive.non_members - m.true_negatives) as i64
            );
            assert!((m.advantage - gap).abs() < 1e-12);
            assert!((gap - (rep.target_train_accuracy - rep.target_test_accuracy)).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let a = run_experiment(&small_config(), 1).unwrap();
        let b = run_experiment(&small_config(), 3).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        a.write_csv(&mut ca).unwrap();
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with("attack,repetition,alpha,accuracy,advantage,precision,recall,config_hash,master_seed\n"));
        assert!(text.lines().skip(1).all(|l| l.ends_with(&format!("{},7", a.provenance.config_hash))));
    }

    #[test]
    fn too_few_successes_fail_the_run() {
        let mut c = small_config();
        // 10 records per class cannot feed the requested calibration sample
        c.calibration_sample_size = Some(1000);
        let err = run_experiment(&c, 1).unwrap_err();
        assert!(matches!(err, Error::Experiment(_)), "{err}");
    }

    #[test]
    fn attacks_only_depend_on_holdout() {
        let c = small_config();
        let (data, _) = c.load_dataset().unwrap();
        let split = split_dataset(&data, &c.split.spec(split_seed(c.master_seed, 0))).unwrap();
        let target = c.target.train(&split.train, 1).unwrap();
        let kind = AttackKind::BayesWb {
            proxies: Default::default(),
            slice: None,
            steps: 10,
        };
        let base = build_attack(&kind, &target, &split.holdout, &c.target, None, 5).unwrap();
        let score = |a: &AttackModel| split.test.iter().map(|(x, y)| a.confidence(x, y).unwrap()).collect::<Vec<_>>();

        // relabel the train part after the target is fixed
        let mut relabeled = split.clone();
        let shifted: Vec<usize> = relabeled.train.labels().iter().map(|&y| (y + 1) % 3).collect();
        relabeled.train = LabeledDataset::new(relabeled.train.features().clone(), shifted, 3).unwrap();
        let again = build_attack(&kind, &target, &relabeled.holdout, &c.target, None, 5).unwrap();
        assert_eq!(score(&base), score(&again));

        let swapped = build_attack(&kind, &target, &split.test.concat(&split.train).unwrap(), &c.target, None, 5).unwrap();
        assert_ne!(score(&base), score(&swapped));
    }
}
