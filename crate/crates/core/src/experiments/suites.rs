use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{Ablation, FeatureGroup};
use crate::model::{Context, InputMode, ModelConfig, Pooling};
use crate::rng;

use super::{run_crossval, train_run, Dataset, FoldPlan, Protocol, RunReport, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRow {
    pub speaker: String,
    pub n_test_utterances: usize,
    pub selected_epoch: usize,
    pub dev_acc: f64,
    pub test_acc: f64,
}

/// Hold out each speaker in turn; 10 % of the remaining utterances, drawn
/// with `split_seed`, is the dev set.
pub fn speaker_independent(
    data: &Dataset,
    cfg: &ModelConfig,
    ablation: &Ablation,
    split_seed: u64,
    model_seed: u64,
) -> Result<Vec<SpeakerRow>> {
    let speakers = data.corpus().speakers();
    if speakers.len() < 2 {
        return Err(Error::Experiment(format!("{} speaker(s); need at least 2", speakers.len())));
    }
    let splits = speakers
        .iter()
        .enumerate()
        .map(|(i, spk)| {
            let (test, mut rest): (Vec<_>, Vec<_>) = data.corpus().utterances.iter().partition(|u| &u.speaker == spk);
            if test.is_empty() {
                return Err(Error::Experiment(format!("speaker `{spk}` has no utterances")));
            }
            rest.shuffle(&mut rng::stream(split_seed, "speaker-dev", &[i as u64]));
            let n_dev = ((rest.len() as f64 * 0.1).round() as usize).max(1);
            let ids = |us: &[&crate::corpus::Utterance]| us.iter().map(|u| u.id.clone()).collect::<Vec<_>>();
            let split = Split {
                dev: ids(&rest[..n_dev]),
                train: ids(&rest[n_dev..]),
                test: ids(&test),
            };
            split.check_disjoint()?;
            if split.test.iter().any(|id| data.utterance(id).map(|u| &u.speaker != spk).unwrap_or(true))
                || split.train.iter().chain(&split.dev).any(|id| data.utterance(id).map(|u| &u.speaker == spk).unwrap_or(true))
            {
                return Err(Error::Experiment(format!("leakage: held-out speaker `{spk}` in train/dev")));
            }
            Ok(split)
        })
        .collect::<Result<Vec<_>>>()?;
    speakers
        .par_iter()
        .zip(splits.par_iter())
        .enumerate()
        .map(|(i, (spk, split))| {
            let r = train_run(data, cfg, ablation, split, i, model_seed)?;
            Ok(SpeakerRow {
                speaker: spk.clone(),
                n_test_utterances: split.test.len(),
                selected_epoch: r.selected_epoch,
                dev_acc: r.dev_acc,
                test_acc: r.test_acc,
            })
        })
        .collect()
}

/// Every single group and every pair of groups dropped, plus nothing
/// dropped.
pub fn default_ablations() -> Vec<Ablation> {
    let g = FeatureGroup::ALL;
    let mut out = vec![Ablation::None];
    out.extend(g.iter().map(|&x| Ablation::drop(&[x])));
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            out.push(Ablation::drop(&[g[i], g[j]]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: String,
    pub context: Context,
    pub architecture: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_dev: f64,
    pub std_dev: f64,
    pub mean_test: f64,
    pub std_test: f64,
}

fn architecture(use_lstm: bool) -> &'static str {
    if use_lstm {
        "cnn_lstm"
    } else {
        "cnn"
    }
}

/// Cross-validate each ablation under full-utterance and three-token
/// context, with and without the LSTM.
pub fn ablation_suite(
    data: &Dataset,
    cfg: &ModelConfig,
    ablations: &[Ablation],
    plan: &FoldPlan,
    protocol: &Protocol,
) -> Result<(Vec<AblationRow>, Vec<RunReport>)> {
    if !cfg.input_mode.uses_speech() {
        return Err(Error::Config("ablations need a speech or speech_text model".into()));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for ab in ablations {
        for context in [Context::FullUtterance, Context::ThreeToken] {
            for use_lstm in [true, false] {
                let c = cfg.clone().with_context(context, use_lstm);
                let rep = run_crossval(data, &c, ab, plan, protocol)?;
                rows.push(AblationRow {
                    ablation: ab.label(),
                    context,
                    architecture: architecture(use_lstm).into(),
                    runs: rep.runs.len(),
                    failed: rep.failed.len(),
                    mean_dev: rep.dev.mean,
                    std_dev: rep.dev.std,
                    mean_test: rep.test.mean,
                    std_test: rep.test.std,
                });
                reports.push(rep);
            }
        }
    }
    Ok((rows, reports))
}

pub const DEFAULT_VOCAB_SIZES: [usize; 7] = [3000, 1000, 500, 100, 50, 10, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabRow {
    pub vocab_size: usize,
    pub runs: usize,
    pub mean_dev: f64,
    pub std_dev: f64,
    pub mean_test: f64,
    pub std_test: f64,
}

/// Text-only cross-validation at each vocabulary size; rarer types map to
/// the unknown-word id.
pub fn vocab_shrink_suite(
    data: &Dataset,
    cfg: &ModelConfig,
    sizes: &[usize],
    plan: &FoldPlan,
    protocol: &Protocol,
) -> Result<Vec<VocabRow>> {
    if !cfg.input_mode.uses_text() {
        return Err(Error::Config("vocabulary ablation needs a text or speech_text model".into()));
    }
    sizes
        .iter()
        .map(|&size| {
            if size == 0 {
                return Err(Error::Config("vocabulary size must be at least 1".into()));
            }
            let c = ModelConfig {
                vocab_size: size,
                input_mode: InputMode::Text,
                ..cfg.clone()
            };
            let rep = run_crossval(data, &c, &Ablation::None, plan, protocol)?;
            Ok(VocabRow {
                vocab_size: size,
                runs: rep.runs.len(),
                mean_dev: rep.dev.mean,
                std_dev: rep.dev.std,
                mean_test: rep.test.mean,
                std_test: rep.test.std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HparamSpace {
    pub cnn_layers: Vec<usize>,
    pub lstm_layers: Vec<usize>,
    pub dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub filter_width: Vec<usize>,
    pub pooling: Vec<Pooling>,
}

impl Default for HparamSpace {
    fn default() -> Self {
        HparamSpace {
            cnn_layers: vec![2, 3, 4],
            lstm_layers: vec![2, 3],
            dropout: vec![0.0, 0.2, 0.5, 0.7],
            weight_decay: vec![0.0, 1e-5, 1e-4],
            filter_width: (9..=23).step_by(2).collect(),
            pooling: vec![Pooling::Sum, Pooling::Max],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HparamPoint {
    pub cnn_layers: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub filter_width: usize,
    pub pooling: Pooling,
}

impl HparamPoint {
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone().with_cnn_layers(self.cnn_layers);
        c.lstm_layers = self.lstm_layers;
        c.dropout = self.dropout;
        c.weight_decay = self.weight_decay;
        c.cnn_kernel_width = self.filter_width;
        c.pooling = self.pooling;
        c
    }
}

impl HparamSpace {
    fn dims(&self) -> [usize; 6] {
        [
            self.cnn_layers.len(),
            self.lstm_layers.len(),
            self.dropout.len(),
            self.weight_decay.len(),
            self.filter_width.len(),
            self.pooling.len(),
        ]
    }

    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    /// The `i`-th grid point, last dimension fastest.
    pub fn point(&self, i: usize) -> HparamPoint {
        let d = self.dims();
        let mut digits = [0usize; 6];
        let mut rem = i;
        for k in (0..6).rev() {
            digits[k] = rem % d[k];
            rem /= d[k];
        }
        HparamPoint {
            cnn_layers: self.cnn_layers[digits[0]],
            lstm_layers: self.lstm_layers[digits[1]],
            dropout: self.dropout[digits[2]],
            weight_decay: self.weight_decay[digits[3]],
            filter_width: self.filter_width[digits[4]],
            pooling: self.pooling[digits[5]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HparamTrial {
    pub trial: usize,
    pub grid_index: usize,
    pub cnn_layers: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub filter_width: usize,
    pub pooling: Pooling,
    pub runs: usize,
    pub mean_dev: f64,
    pub mean_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HparamReport {
    pub trials: Vec<HparamTrial>,
    /// Position in `trials` of the highest mean dev accuracy.
    pub best: usize,
    pub best_config: ModelConfig,
    /// Spread of mean dev accuracy across the sampled configurations.
    pub dev_across_configs: super::Stats,
}

/// Sample `budget` distinct grid points and cross-validate each under
/// `protocol` (by default a reduced one); keep the best on dev.
pub fn hparam_search(
    data: &Dataset,
    base: &ModelConfig,
    space: &HparamSpace,
    budget: usize,
    seed: u64,
    plan: &FoldPlan,
    protocol: &Protocol,
) -> Result<HparamReport> {
    let size = space.size();
    if budget == 0 || budget > size {
        return Err(Error::Config(format!("budget {budget} outside 1..={size}")));
    }
    let picks = index::sample(&mut rng::stream(seed, "hparam", &[]), size, budget).into_vec();
    let mut trials = Vec::with_capacity(budget);
    for (t, &gi) in picks.iter().enumerate() {
        let p = space.point(gi);
        let cfg = p.apply(base);
        let rep = run_crossval(data, &cfg, &Ablation::None, plan, protocol)?;
        log::info!("hparam trial {t}: {p:?} dev {:.4}", rep.dev.mean);
        trials.push(HparamTrial {
            trial: t,
            grid_index: gi,
            cnn_layers: p.cnn_layers,
            lstm_layers: p.lstm_layers,
            dropout: p.dropout,
            weight_decay: p.weight_decay,
            filter_width: p.filter_width,
            pooling: p.pooling,
            runs: rep.runs.len(),
            mean_dev: rep.dev.mean,
            mean_test: rep.test.mean,
        });
    }
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.mean_dev > trials[best].mean_dev {
            best = i;
        }
    }
    let devs: Vec<f64> = trials.iter().map(|t| t.mean_dev).collect();
    Ok(HparamReport {
        best_config: space.point(trials[best].grid_index).apply(base),
        best,
        dev_across_configs: super::describe(&devs),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: String,
    pub value: usize,
    pub runs: usize,
    pub mean_dev: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub repairs: usize,
}

/// Filter widths at depth 3, then depths at width 11.
pub fn cnn_sweep(
    data: &Dataset,
    cfg: &ModelConfig,
    widths: &[usize],
    depths: &[usize],
    plan: &FoldPlan,
    protocol: &Protocol,
) -> Result<Vec<SweepRow>> {
    if !cfg.input_mode.uses_speech() {
        return Err(Error::Config("the CNN sweep needs a speech model".into()));
    }
    let mut rows = Vec::new();
    let cells = widths
        .iter()
        .map(|&w| ("width", w))
        .chain(depths.iter().map(|&d| ("depth", d)));
    for (sweep, value) in cells {
        let mut c = cfg.clone();
        if sweep == "width" {
            c = c.with_cnn_layers(3);
            c.cnn_kernel_width = value;
        } else {
            c = c.with_cnn_layers(value);
            c.cnn_kernel_width = 11;
        }
        let rep = run_crossval(data, &c, &Ablation::None, plan, protocol)?;
        rows.push(SweepRow {
            sweep: sweep.into(),
            value,
            runs: rep.runs.len(),
            mean_dev: rep.dev.mean,
            mean_test: rep.test.mean,
            std_test: rep.test.std,
            repairs: rep.repairs,
        });
    }
    Ok(rows)
}
