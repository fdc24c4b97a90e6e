//! Training runs, cross-validation and the experiment suites built on it.

mod dataset;
mod folds;
mod report;
mod suites;
mod trainer;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::Ablation;
use crate::model::ModelConfig;

pub use dataset::Dataset;
pub use folds::{make_folds, FoldPlan, Split, N_FOLDS};
pub use report::{read_crossval_csv, write_csv, write_crossval_csv, write_json, CrossvalRow};
pub use suites::{
    ablation_suite, cnn_sweep, default_ablations, hparam_search, speaker_independent, vocab_shrink_suite, AblationRow,
    HparamPoint, HparamReport, HparamSpace, HparamTrial, SpeakerRow, SweepRow, VocabRow, DEFAULT_VOCAB_SIZES,
};
pub use trainer::{
    evaluate, examples_with_meta, fit, prepare, run_seed, select_epoch, train_run, train_run_with_model, EpochLog, Prepared, RunRecord,
};

/// Which splits and seeds a cross-validation covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    /// Model seeds; every split is trained once per seed.
    pub seeds: Vec<u64>,
    /// Run only the first `folds` of the ten splits.
    pub folds: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            seeds: vec![1, 2, 3, 4, 5],
            folds: N_FOLDS,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.folds == 0 || self.folds > N_FOLDS {
            return Err(Error::Config(format!(
                "protocol needs at least one seed and 1..={N_FOLDS} folds (got {} seeds, {} folds)",
                self.seeds.len(),
                self.folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased (n − 1) sample variance; zero for a single value.
    pub variance: f64,
    pub std: f64,
    pub stderr: f64,
}

pub fn describe(xs: &[f64]) -> Stats {
    let n = xs.len();
    if n == 0 {
        return Stats {
            n,
            mean: f64::NAN,
            variance: f64::NAN,
            std: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Stats {
        n,
        mean,
        variance,
        std: variance.sqrt(),
        stderr: (variance / n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub fold: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunRecord>,
    /// Diverged runs, excluded from the aggregates.
    pub failed: Vec<FailedRun>,
    pub dev: Stats,
    pub test: Stats,
    pub repairs: usize,
}

impl RunReport {
    pub fn from_runs(runs: Vec<RunRecord>, failed: Vec<FailedRun>) -> Self {
        let dev: Vec<f64> = runs.iter().map(|r| r.dev_acc).collect();
        let test: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
        let repairs = runs.iter().map(|r| r.repairs).sum();
        RunReport {
            dev: describe(&dev),
            test: describe(&test),
            runs,
            failed,
            repairs,
        }
    }

    /// Mean over runs of test accuracy restricted to the tokens selected by
    /// `mask(run)`. Runs whose mask selects nothing are skipped.
    pub fn masked_test_accuracy<F>(&self, mut mask: F) -> Option<f64>
    where
        F: FnMut(&RunRecord) -> Vec<bool>,
    {
        let accs: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| {
                let m = mask(r);
                crate::baselines::masked_accuracy(&r.test_pred, &r.test_gold, &m).ok().flatten()
            })
            .collect();
        (!accs.is_empty()).then(|| describe(&accs).mean)
    }
}

/// Train every (split, seed) pair of the protocol. Jobs run on the rayon
/// pool; results come back in (fold, seed) order regardless of scheduling.
pub fn run_crossval(
    data: &Dataset,
    cfg: &ModelConfig,
    ablation: &Ablation,
    plan: &FoldPlan,
    protocol: &Protocol,
) -> Result<RunReport> {
    protocol.validate()?;
    for split in plan.splits.iter().take(protocol.folds) {
        split.check_disjoint()?;
        if let Some(id) = split.train.iter().chain(&split.dev).chain(&split.test).find(|id| !data.contains(id)) {
            return Err(Error::Experiment(format!("fold plan names unknown utterance `{id}`")));
        }
    }
    let jobs: Vec<(usize, u64)> = (0..protocol.folds.min(plan.splits.len()))
        .flat_map(|f| protocol.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let results: Vec<Result<RunRecord>> = jobs
        .par_iter()
        .map(|&(fold, seed)| train_run(data, cfg, ablation, &plan.splits[fold], fold, seed))
        .collect();
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(rec) => runs.push(rec),
            Err(Error::Diverged {
                fold,
                seed,
                epoch,
                message,
            }) => {
                log::warn!("run fold {fold} seed {seed} diverged at epoch {epoch}: {message}");
                failed.push(FailedRun {
                    fold,
                    seed,
                    message: format!("epoch {epoch}: {message}"),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunReport::from_runs(runs, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_matches_hand_values() {
        let s = describe(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert_eq!(describe(&[7.0]).variance, 0.0);
        assert!(describe(&[]).mean.is_nan());
    }

    #[test]
    fn protocol_bounds() {
        Protocol::default().validate().unwrap();
        let p = Protocol {
            folds: 11,
            ..Protocol::default()
        };
        assert!(p.validate().is_err());
        let p = Protocol {
            seeds: vec![],
            ..Protocol::default()
        };
        assert!(p.validate().is_err());
    }
}
