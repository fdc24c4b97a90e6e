use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::featurizer::{ablate, apply_norm, fit_norm, Ablation, NormStats};
use crate::model::{build_examples, load_embeddings, AccentModel, Example, ModelConfig, ModelMeta, Prediction};
use crate::nnkernel::Adam;
use crate::rng;

use super::{Dataset, Split};

/// Model inputs for one split, normalized with train-only statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub norm: NormStats,
    pub vocab: Option<Vocabulary>,
    pub test_gold: Vec<u8>,
    pub repairs: usize,
}

fn examples_for(
    data: &Dataset,
    ids: &[String],
    cfg: &ModelConfig,
    norm: &NormStats,
    ablation: &Ablation,
    vocab: Option<&Vocabulary>,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for id in ids {
        let u = data.utterance(id)?;
        let fm = if cfg.input_mode.uses_speech() {
            let raw = data
                .features(id)
                .ok_or_else(|| Error::Features(format!("no features for utterance `{id}`")))?;
            Some(ablate(&apply_norm(raw, norm), ablation)?)
        } else {
            None
        };
        out.extend(build_examples(u, fm.as_ref(), vocab, cfg)?);
    }
    Ok(out)
}

/// Build train/dev/test inputs. Normalization statistics and the
/// vocabulary come from the training ids only.
pub fn prepare(data: &Dataset, cfg: &ModelConfig, ablation: &Ablation, split: &Split) -> Result<Prepared> {
    cfg.validate()?;
    ablation.validate()?;
    split.check_disjoint()?;
    let norm = if cfg.input_mode.uses_speech() {
        if !data.has_features() {
            return Err(Error::Features("speech model requested but the dataset has no audio features".into()));
        }
        fit_norm(split.train.iter().filter_map(|id| data.features(id)))
    } else {
        NormStats::identity()
    };
    let vocab = if cfg.input_mode.uses_text() {
        let train = Corpus::new(
            split
                .train
                .iter()
                .map(|id| data.utterance(id).cloned())
                .collect::<Result<Vec<_>>>()?,
            data.corpus().sample_rate_hz,
        )?;
        Some(build_vocab(&train, cfg.vocab_size)?)
    } else {
        None
    };
    let v = vocab.as_ref();
    let train = examples_for(data, &split.train, cfg, &norm, ablation, v)?;
    let dev = examples_for(data, &split.dev, cfg, &norm, ablation, v)?;
    let test = examples_for(data, &split.test, cfg, &norm, ablation, v)?;
    let test_gold = test.iter().flat_map(|e| e.scored_labels()).map(|l| l as u8).collect();
    let repairs = train.iter().chain(&dev).chain(&test).map(|e| e.repairs).sum();
    Ok(Prepared {
        train,
        dev,
        test,
        norm,
        vocab,
        test_gold,
        repairs,
    })
}

/// Inputs for `ids` prepared the way the checkpoint described by `meta`
/// was trained: its normalization, ablation and vocabulary.
pub fn examples_with_meta(data: &Dataset, ids: &[String], meta: &ModelMeta) -> Result<Vec<Example>> {
    examples_for(data, ids, &meta.config, &meta.norm, &meta.ablation, meta.vocab.as_ref())
}

/// Predicted labels and accuracy over the scored tokens of `examples`.
pub fn evaluate(model: &AccentModel, examples: &[Example]) -> Result<(f64, Vec<u8>)> {
    if examples.is_empty() {
        return Ok((f64::NAN, Vec::new()));
    }
    let preds: Vec<Prediction> = model.predict_utterance(examples)?;
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    let gold = examples.iter().flat_map(|e| e.scored_labels());
    let hits = labels.iter().zip(gold).filter(|(&p, g)| p as usize == *g).count();
    Ok((hits as f64 / labels.len() as f64, labels))
}

/// Consecutive examples from the same utterance (one per utterance, or one
/// per window in windowed contexts).
fn utterance_groups(examples: &[Example]) -> Vec<&[Example]> {
    examples.chunk_by(|a, b| a.utterance == b.utterance).collect()
}

/// Train for `epochs` passes over `train`, calling `after_epoch` with the
/// 1-based epoch number and the mean training loss. Each epoch shuffles
/// the utterances and cuts batches of `batch_size` utterances; in windowed
/// contexts a batch carries every window of its utterances. Dropout masks
/// come from a per-epoch stream. Training ends early when `after_epoch`
/// returns `Break`; the number of epochs run is returned.
pub fn fit<F>(model: &mut AccentModel, train: &[Example], epochs: usize, run_seed: u64, mut after_epoch: F) -> Result<usize>
where
    F: FnMut(usize, f64, &AccentModel) -> Result<ControlFlow<()>>,
{
    let cfg = model.config().clone();
    let mut adam = Adam::new(cfg.adam(), model.params());
    let groups = utterance_groups(train);
    for epoch in 1..=epochs {
        let mut order = groups.clone();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng::stream(run_seed, "epoch-order", &[epoch as u64]));
        let mut dropout = rng::stream(run_seed, "dropout", &[epoch as u64]);
        let (mut loss_sum, mut weight) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().flat_map(|g| g.iter()).collect();
            let n: usize = batch.iter().map(|e| e.n_scored()).sum();
            let loss = model.train_step(&batch, &mut adam, &mut dropout)?;
            loss_sum += loss * n as f64;
            weight += n;
        }
        if after_epoch(epoch, loss_sum / weight.max(1) as f64, model)?.is_break() {
            return Ok(epoch);
        }
    }
    Ok(epochs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_acc: f64,
    pub test_acc: f64,
}

/// Index of the first epoch with the highest dev accuracy.
pub fn select_epoch(log: &[EpochLog]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in log.iter().enumerate() {
        if best.is_none_or(|b| e.dev_acc > log[b].dev_acc) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fold: usize,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    /// 1-based, as in `epochs[..].epoch`.
    pub selected_epoch: usize,
    pub dev_acc: f64,
    pub test_acc: f64,
    /// Test predictions at the selected epoch, token order of `split.test`.
    pub test_pred: Vec<u8>,
    pub test_gold: Vec<u8>,
    pub norm: NormStats,
    pub n_params: usize,
    pub repairs: usize,
}

/// Seed of the model initialization for one (fold, seed) run.
pub fn run_seed(fold: usize, seed: u64) -> u64 {
    rng::derive_seed(seed, "run", &[fold as u64])
}

/// Train one model and read test accuracy at the best-dev epoch.
pub fn train_run(
    data: &Dataset,
    cfg: &ModelConfig,
    ablation: &Ablation,
    split: &Split,
    fold: usize,
    seed: u64,
) -> Result<RunRecord> {
    Ok(train_run_with_model(data, cfg, ablation, split, fold, seed)?.0)
}

/// [`train_run`], also returning the model at the selected epoch and the
/// metadata needed to reuse it.
pub fn train_run_with_model(
    data: &Dataset,
    cfg: &ModelConfig,
    ablation: &Ablation,
    split: &Split,
    fold: usize,
    seed: u64,
) -> Result<(RunRecord, AccentModel, ModelMeta)> {
    if split.dev.is_empty() || split.test.is_empty() {
        return Err(Error::Experiment("training runs need nonempty dev and test sets".into()));
    }
    let prep = prepare(data, cfg, ablation, split)?;
    let rs = run_seed(fold, seed);
    let vocab_size = prep.vocab.as_ref().map_or(0, |v| v.size());
    let mut model = AccentModel::new(cfg.clone(), vocab_size, rs)?;
    if let (Some(path), Some(vocab)) = (data.embeddings(), prep.vocab.as_ref()) {
        load_embeddings(path, vocab, &mut model)?;
    }
    let n_params = model.num_parameters();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<u8>, AccentModel)> = None;
    let result = fit(&mut model, &prep.train, cfg.epochs, rs, |epoch, loss, m| {
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                op: "loss",
                stage: "training",
            });
        }
        let (dev_acc, _) = evaluate(m, &prep.dev)?;
        let (test_acc, test_pred) = evaluate(m, &prep.test)?;
        if best.as_ref().is_none_or(|(d, _, _)| dev_acc > *d) {
            best = Some((dev_acc, test_pred, m.clone()));
        }
        log.push(EpochLog {
            epoch,
            train_loss: loss,
            dev_acc,
            test_acc,
        });
        Ok(ControlFlow::Continue(()))
    });
    if let Err(e) = result {
        return Err(match e {
            Error::NonFinite { op, stage } => Error::Diverged {
                fold,
                seed,
                epoch: log.len() + 1,
                message: format!("non-finite value in {op} ({stage})"),
            },
            other => other,
        });
    }
    let sel = select_epoch(&log).expect("at least one epoch");
    let (_, test_pred, best_model) = best.expect("at least one epoch");
    let record = RunRecord {
        fold,
        seed,
        selected_epoch: log[sel].epoch,
        dev_acc: log[sel].dev_acc,
        test_acc: log[sel].test_acc,
        epochs: log,
        test_pred,
        test_gold: prep.test_gold,
        norm: prep.norm,
        n_params,
        repairs: prep.repairs,
    };
    let meta = ModelMeta {
        config: cfg.clone(),
        vocab: prep.vocab,
        norm: prep.norm,
        ablation: ablation.clone(),
    };
    Ok((record, best_model, meta))
}
