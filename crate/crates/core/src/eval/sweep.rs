//! Hyperparameter selection for general-wb over a grid of displacement
//! widths `n_d` and meta widths `n_m`.
//!
//! Validation never looks at the real train/test parts: the holdout is split
//! again into pseudo train / test / holdout parts, a shadow target is trained
//! on the pseudo train part, and the attack is built from the pseudo holdout
//! and scored on pseudo members vs pseudo non-members.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackKind, ExperimentConfig};
use super::experiment::{split_seed, MeanStd};
use super::metrics::compute_metrics;
use crate::attacks::{general_wb_train, GeneralWbConfig, MembershipAttack};
use crate::data::{split_dataset, LabeledDataset};
use crate::nn::Network;
use crate::{seed, Error, Provenance, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_d: Vec<usize>,
    pub n_m: Vec<usize>,
    /// Pseudo splits of the holdout averaged per validation score.
    #[serde(default = "default_rounds")]
    pub validation_rounds: usize,
}

fn default_rounds() -> usize {
    3
}

impl SweepGrid {
    /// Sorted, de-duplicated cells.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut d = self.n_d.clone();
        d.sort_unstable();
        d.dedup();
        let mut m = self.n_m.clone();
        m.sort_unstable();
        m.dedup();
        d.iter().flat_map(|&a| m.iter().map(move |&b| (a, b))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_d.is_empty() || self.n_m.is_empty() {
            return Err(Error::Config("grid: n_d and n_m must be non-empty".into()));
        }
        if self.validation_rounds == 0 {
            return Err(Error::Config("grid.validation_rounds: must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub repetition: usize,
    pub n_d: usize,
    pub n_m: usize,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n_d: usize,
    pub n_m: usize,
    pub validation_accuracy: MeanStd,
    pub test_accuracy: MeanStd,
    /// Highest mean validation accuracy; ties go to the smallest `n_d`, then
    /// `n_m`. Exactly one cell is selected.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub provenance: Provenance,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn selected(&self) -> &SweepCell {
        self.cells.iter().find(|c| c.selected).expect("one cell is always selected")
    }

    /// Per-cell table with provenance columns.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n_d",
            "n_m",
            "validation_accuracy",
            "validation_std",
            "test_accuracy",
            "test_std",
            "selected",
            "config_hash",
            "master_seed",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.n_d.to_string(),
                c.n_m.to_string(),
                c.validation_accuracy.mean.to_string(),
                c.validation_accuracy.std.to_string(),
                c.test_accuracy.mean.to_string(),
                c.test_accuracy.std.to_string(),
                c.selected.to_string(),
                self.provenance.config_hash.clone(),
                self.provenance.master_seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accuracy at the default threshold, members vs non-members.
fn game_accuracy(attack: &dyn MembershipAttack, members: &LabeledDataset, non_members: &LabeledDataset) -> Result<f64> {
    let mut pred: Vec<bool> = attack.confidences(members)?.into_iter().map(|c| c > 0.5).collect();
    pred.extend(attack.confidences(non_members)?.into_iter().map(|c| c > 0.5));
    let truth: Vec<bool> = (0..pred.len()).map(|i| i < members.len()).collect();
    Ok(compute_metrics(&pred, &truth)?.accuracy)
}

struct Stage {
    target: Network,
    members: LabeledDataset,
    non_members: LabeledDataset,
    holdout: LabeledDataset,
}

fn sweep_repetition(
    config: &ExperimentConfig,
    base: &GeneralWbConfig,
    grid: &SweepGrid,
    data: &LabeledDataset,
    rep: usize,
) -> Result<Vec<SweepRow>> {
    let s_seed = split_seed(config.master_seed, rep);
    let split = split_dataset(data, &config.split.spec(s_seed))?;
    let target = config
        .target
        .train(&split.train, seed::derive(config.master_seed, seed::tag::TARGET, rep as u64))?;
    let mut pseudo = Vec::with_capacity(grid.validation_rounds);
    for v in 0..grid.validation_rounds as u64 {
        let inner = split_dataset(&split.holdout, &config.split.spec(seed::derive(s_seed, seed::tag::VALIDATION, v)))?;
        let shadow = config.target.train(&inner.train, seed::derive(s_seed, seed::tag::SHADOW, v))?;
        pseudo.push(Stage {
            target: shadow,
            members: inner.train,
            non_members: inner.test,
            holdout: inner.holdout,
        });
    }
    let real = Stage {
        target,
        members: split.train,
        non_members: split.test,
        holdout: split.holdout,
    };
    let attack_seed = seed::derive(config.master_seed, seed::tag::REPETITION, rep as u64);
    let score = |stage: &Stage, cfg: &GeneralWbConfig, salt: u64| -> Result<f64> {
        let attack = general_wb_train(&stage.target, &stage.holdout, &config.target, cfg, seed::derive(attack_seed, seed::tag::ATTACK, salt))?;
        game_accuracy(&attack, &stage.members, &stage.non_members)
    };
    grid.cells()
        .into_iter()
        .map(|(n_d, n_m)| {
            let cfg = GeneralWbConfig {
                n_d,
                n_m,
                ..base.clone()
            };
            let val = pseudo
                .iter()
                .enumerate()
                .map(|(v, st)| score(st, &cfg, 1 + v as u64))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                repetition: rep,
                n_d,
                n_m,
                validation_accuracy: val.iter().sum::<f64>() / val.len() as f64,
                test_accuracy: score(&real, &cfg, 0)?,
            })
        })
        .collect()
}

/// Runs the validation sweep for every repetition of `config`. The
/// general-wb settings other than `n_d`/`n_m` come from the first general-wb
/// attack in the config, or the defaults.
pub fn run_sweep(config: &ExperimentConfig, grid: &SweepGrid, jobs: usize) -> Result<SweepReport> {
    config.validate()?;
    grid.validate()?;
    let base = config
        .attacks
        .iter()
        .find_map(|a| match &a.kind {
            AttackKind::GeneralWb(g) => Some(g.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let (data, _) = config.load_dataset()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    let per_rep: Vec<Vec<SweepRow>> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| {
                log::info!("sweep repetition {rep}");
                sweep_repetition(config, &base, grid, &data, rep)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<SweepRow> = per_rep.into_iter().flatten().collect();
    let mut cells: Vec<SweepCell> = grid
        .cells()
        .into_iter()
        .map(|(n_d, n_m)| {
            let pick = |f: fn(&SweepRow) -> f64| {
                MeanStd::of(&rows.iter().filter(|r| r.n_d == n_d && r.n_m == n_m).map(f).collect::<Vec<_>>())
            };
            SweepCell {
                n_d,
                n_m,
                validation_accuracy: pick(|r| r.validation_accuracy),
                test_accuracy: pick(|r| r.test_accuracy),
                selected: false,
            }
        })
        .collect();
    mark_selected(&mut cells);
    Ok(SweepReport {
        provenance: config.provenance(),
        rows,
        cells,
    })
}

/// Cells must be sorted by `(n_d, n_m)`.
fn mark_selected(cells: &mut [SweepCell]) {
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.validation_accuracy.mean > cells[best].validation_accuracy.mean {
            best = i;
        }
    }
    if let Some(c) = cells.get_mut(best) {
        c.selected = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(n_d: usize, n_m: usize, v: f64) -> SweepCell {
        SweepCell {
            n_d,
            n_m,
            validation_accuracy: MeanStd { mean: v, std: 0.0 },
            test_accuracy: MeanStd { mean: 0.5, std: 0.0 },
            selected: false,
        }
    }

    #[test]
    fn ties_go_to_smallest_widths() {
        let mut cells = vec![cell(0, 4, 0.6), cell(0, 16, 0.7), cell(4, 0, 0.7), cell(4, 4, 0.65)];
        mark_selected(&mut cells);
        let chosen: Vec<_> = cells.iter().filter(|c| c.selected).map(|c| (c.n_d, c.n_m)).collect();
        assert_eq!(chosen, vec![(0, 16)]);
    }

    #[test]
    fn grid_is_sorted_and_deduplicated() {
        let g = SweepGrid {
            n_d: vec![16, 0, 16],
            n_m: vec![4, 0],
            validation_rounds: 1,
        };
        assert_eq!(g.cells(), vec![(0, 0), (0, 4), (16, 0), (16, 4)]);
    }

    #[test]
    fn one_cell_gives_one_row_per_repetition() {
        let config = ExperimentConfig::from_json(
            r#"{"dataset": {"source": "synthetic", "classes": 3, "features": 5, "records": 120},
                "attacks": [{"kind": "general_wb", "splits": 2}], "repetitions": 3}"#,
        )
        .unwrap();
        let grid = SweepGrid {
            n_d: vec![0],
            n_m: vec![0],
            validation_rounds: 1,
        };
        let report = run_sweep(&config, &grid, 2).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert!(report.cells[0].selected);
        assert_eq!(report.rows.len(), 3);
    }
}
