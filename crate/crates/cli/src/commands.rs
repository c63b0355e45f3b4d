use std::path::Path;

use serde::Serialize;
use serde_json::json;
use wbmia::attacks::AttackDocument;
use wbmia::data::{fit_gnb_params, split_dataset, GnbParams, LabeledDataset, Split};
use wbmia::eval::{
    build_attack, evaluate_attack, run_experiment, run_sweep, split_seed, write_reports_csv, AttackKind,
    ExperimentConfig, OracleKnowledge, SweepGrid, Thresholds,
};
use wbmia::nn::Network;
use wbmia::target::evaluate_model;
use wbmia::{seed, Error};

use crate::args::{Command, Common};
use crate::config;
use crate::error::CliError;
use crate::output::{write_json, OutputDir};

pub fn dispatch(command: &Command) -> Result<(), CliError> {
    let common = command.common();
    let config = config::load(common)?;
    log::info!(
        "{}: config {} (hash {}), master seed {}",
        command.name(),
        common.config.display(),
        config.config_hash(),
        config.master_seed
    );
    let mut inputs: Vec<&Path> = vec![&common.config];
    match command {
        Command::Attack { target: Some(t), .. } => inputs.push(t),
        Command::Calibrate { attack_model, .. } => inputs.push(attack_model),
        _ => {}
    }
    let mut out = OutputDir::create(&common.out_dir, &inputs)?;
    match command {
        Command::GenData(_) => gen_data(&config, &mut out)?,
        Command::TrainTarget { repetition, .. } => train_target(&config, *repetition, &mut out)?,
        Command::Attack {
            attack,
            repetition,
            target,
            ..
        } => attack_cmd(&config, attack, *repetition, target.as_deref(), &mut out)?,
        Command::Calibrate {
            attack_model,
            repetition,
            ..
        } => calibrate(&config, attack_model, *repetition, &mut out)?,
        Command::Run(common) => run(&config, common, &mut out)?,
        Command::Sweep {
            common,
            n_d,
            n_m,
            validation_rounds,
        } => {
            let grid = SweepGrid {
                n_d: n_d.clone(),
                n_m: n_m.clone(),
                validation_rounds: *validation_rounds,
            };
            sweep(&config, common, &grid, &mut out)?
        }
    }
    let manifest = out.finish(command.name(), &config.provenance())?;
    log::info!("wrote {}", manifest.display());
    Ok(())
}

fn gen_data(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let provenance = config.provenance();
    let (data, truth) = config.load_dataset()?;
    data.save(&out.artifact("dataset.json", "dataset")?, Some(&provenance))?;
    if let Some(params) = truth {
        write_json(
            &out.artifact("gnb_params.json", "generator_parameters")?,
            &provenance,
            json!({ "params": params }),
        )?;
    }
    log::info!("{} records, {} classes", data.len(), data.class_count());
    Ok(())
}

struct Repetition {
    data: LabeledDataset,
    truth: Option<GnbParams>,
    split: Split,
    split_seed: u64,
}

fn repetition(config: &ExperimentConfig, rep: usize) -> Result<Repetition, CliError> {
    let (data, truth) = config.load_dataset()?;
    let s_seed = split_seed(config.master_seed, rep);
    let split = split_dataset(&data, &config.split.spec(s_seed)).map_err(|e| Error::Split(e.to_string()))?;
    Ok(Repetition {
        data,
        truth,
        split,
        split_seed: s_seed,
    })
}

fn target_seed(config: &ExperimentConfig, rep: usize) -> u64 {
    seed::derive(config.master_seed, seed::tag::TARGET, rep as u64)
}

/// Attack seed used by `run` for attack `index` of repetition `rep`.
fn attack_seed(config: &ExperimentConfig, rep: usize, index: usize) -> u64 {
    let rep_seed = seed::derive(config.master_seed, seed::tag::REPETITION, rep as u64);
    seed::derive(rep_seed, seed::tag::ATTACK, index as u64)
}

#[derive(Serialize)]
struct TargetEval {
    repetition: usize,
    split_seed: u64,
    target_seed: u64,
    train_accuracy: f64,
    test_accuracy: f64,
}

fn train_target(config: &ExperimentConfig, rep: usize, out: &mut OutputDir) -> Result<(), CliError> {
    let provenance = config.provenance();
    let r = repetition(config, rep)?;
    let t_seed = target_seed(config, rep);
    let target = config.target.train(&r.split.train, t_seed)?;
    let eval = TargetEval {
        repetition: rep,
        split_seed: r.split_seed,
        target_seed: t_seed,
        train_accuracy: evaluate_model(&target, &r.split.train)?.accuracy,
        test_accuracy: evaluate_model(&target, &r.split.test)?.accuracy,
    };
    log::info!(
        "target accuracy: train {:.4}, test {:.4}",
        eval.train_accuracy,
        eval.test_accuracy
    );
    target.save(&out.artifact("target.json", "model")?, Some(&provenance))?;
    write_json(&out.artifact("target_eval.json", "report")?, &provenance, eval)?;
    write_json(
        &out.artifact("split.json", "split")?,
        &provenance,
        json!({
            "repetition": rep,
            "split_seed": r.split_seed,
            "train": r.split.train_indices,
            "test": r.split.test_indices,
            "holdout": r.split.holdout_indices,
        }),
    )?;
    Ok(())
}

fn attack_cmd(
    config: &ExperimentConfig,
    name: &str,
    rep: usize,
    target_path: Option<&Path>,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let provenance = config.provenance();
    let index = config
        .attacks
        .iter()
        .position(|a| a.label() == name)
        .ok_or_else(|| CliError::Config(format!("--attack: no attack named {name:?} in the config")))?;
    let spec = &config.attacks[index];
    let r = repetition(config, rep)?;
    let target = match target_path {
        Some(p) => {
            let t = Network::load(p)?;
            if t.input_dim() != r.data.feature_count() || t.output_dim() != r.data.class_count() {
                return Err(CliError::Config(format!(
                    "--target: model maps {} features to {} classes, data has {} and {}",
                    t.input_dim(),
                    t.output_dim(),
                    r.data.feature_count(),
                    r.data.class_count()
                )));
            }
            t
        }
        None => config.target.train(&r.split.train, target_seed(config, rep))?,
    };
    let oracle = match (&spec.kind, &r.truth) {
        (AttackKind::Omniscient, Some(truth)) => Some(OracleKnowledge {
            truth: truth.clone(),
            empirical: fit_gnb_params(&r.split.train)?,
        }),
        (AttackKind::Omniscient, None) => {
            return Err(CliError::Config(
                "omniscient attack needs unstandardized synthetic data".into(),
            ))
        }
        _ => None,
    };
    let a_seed = attack_seed(config, rep, index);
    let attack = build_attack(&spec.kind, &target, &r.split.holdout, &config.target, oracle.as_ref(), a_seed)?;
    let reports = evaluate_attack(spec.label(), &attack, &r.split, &[], None, rep, r.split_seed, a_seed)?;
    log::info!("{}: accuracy {:.4} at the default threshold", spec.label(), reports[0].metrics.accuracy);
    let doc = AttackDocument::new(
        attack,
        json!({
            "attack": spec.label(),
            "attack_index": index,
            "repetition": rep,
            "split_seed": r.split_seed,
            "attack_seed": a_seed,
            "spec": spec,
        }),
        Some(provenance.clone()),
    );
    doc.save(&out.artifact("attack.json", "attack_model")?)?;
    write_reports_csv(
        &reports,
        &provenance,
        std::fs::File::create(out.artifact("attack_results.csv", "results")?)?,
    )?;
    Ok(())
}

fn calibrate(config: &ExperimentConfig, path: &Path, rep: usize, out: &mut OutputDir) -> Result<(), CliError> {
    let provenance = config.provenance();
    if config.alphas.is_empty() {
        return Err(CliError::Config("alphas: calibration needs at least one alpha".into()));
    }
    let doc = AttackDocument::load(path)?;
    if doc.provenance.as_ref().is_some_and(|p| p.config_hash != provenance.config_hash) {
        log::warn!("attack model was built under a different config hash");
    }
    let name = doc.parameters["attack"].as_str().unwrap_or(doc.attack.kind()).to_string();
    let a_seed = doc.parameters["attack_seed"]
        .as_u64()
        .ok_or_else(|| CliError::Config(format!("{}: parameters.attack_seed missing", path.display())))?;
    if doc.parameters["repetition"].as_u64().is_some_and(|r| r != rep as u64) {
        log::warn!("attack model was built for a different repetition");
    }
    let r = repetition(config, rep)?;
    let reports = evaluate_attack(
        &name,
        &doc.attack,
        &r.split,
        &config.alphas,
        config.calibration_sample_size,
        rep,
        r.split_seed,
        a_seed,
    )?;
    let thresholds: Vec<Thresholds> = reports
        .iter()
        .filter_map(|rep| {
            Some(Thresholds {
                alpha: rep.alpha?,
                per_class: rep.thresholds.clone()?,
            })
        })
        .collect();
    for rep in &reports {
        log::info!(
            "alpha {:?}: precision {:.4}, recall {:.4}",
            rep.alpha,
            rep.metrics.precision,
            rep.metrics.recall
        );
    }
    write_json(
        &out.artifact("thresholds.json", "thresholds")?,
        &provenance,
        json!({ "attack": name, "repetition": rep, "thresholds": thresholds }),
    )?;
    write_reports_csv(
        &reports,
        &provenance,
        std::fs::File::create(out.artifact("calibration_results.csv", "results")?)?,
    )?;
    Ok(())
}

fn run(config: &ExperimentConfig, common: &Common, out: &mut OutputDir) -> Result<(), CliError> {
    let report = run_experiment(config, common.jobs as usize)?;
    for row in &report.summary {
        log::info!(
            "{} alpha {:?}: accuracy {:.4} ± {:.4}",
            row.attack,
            row.alpha,
            row.accuracy.mean,
            row.accuracy.std
        );
    }
    report.save_csv(&out.artifact("results.csv", "results")?)?;
    report.save_json(&out.artifact("report.json", "report")?)?;
    Ok(())
}

fn sweep(config: &ExperimentConfig, common: &Common, grid: &SweepGrid, out: &mut OutputDir) -> Result<(), CliError> {
    let report = run_sweep(config, grid, common.jobs as usize)?;
    let best = report.selected();
    log::info!(
        "selected n_d={} n_m={} (validation {:.4}, test {:.4})",
        best.n_d,
        best.n_m,
        best.validation_accuracy.mean,
        best.test_accuracy.mean
    );
    report.write_csv(std::fs::File::create(out.artifact("sweep.csv", "results")?)?)?;
    std::fs::write(
        out.artifact("sweep.json", "report")?,
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}
