//! Reference predictors and the scoring functions shared by every
//! experiment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{content_word_mask, Corpus, StopwordList, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Majority,
    ContentWord,
    /// The speech model trained on all-ones features; see
    /// [`crate::featurizer::Ablation::DurationOnly`].
    DurationOnly,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Majority => "majority",
            BaselineKind::ContentWord => "content_word",
            BaselineKind::DurationOnly => "duration_only",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "majority" => Ok(BaselineKind::Majority),
            "content_word" => Ok(BaselineKind::ContentWord),
            "duration_only" => Ok(BaselineKind::DurationOnly),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// More frequent label among `positives` of `total`; ties go to 1.
pub fn majority_from_counts(positives: usize, total: usize) -> u8 {
    u8::from(2 * positives >= total)
}

pub fn majority_predict(train: &Corpus) -> u8 {
    majority_from_counts(train.n_accented(), train.n_tokens())
}

pub fn constant_predict(label: u8, u: &Utterance) -> Vec<u8> {
    vec![label; u.len()]
}

pub fn content_word_predict(u: &Utterance, stopwords: &StopwordList) -> Vec<u8> {
    content_word_mask(u, stopwords)
}

fn check_lengths(pred: usize, gold: usize) -> Result<()> {
    if pred != gold {
        return Err(Error::shape("accuracy", format!("{pred} predictions for {gold} gold labels")));
    }
    if gold == 0 {
        return Err(Error::shape("accuracy", "no tokens to score"));
    }
    Ok(())
}

pub fn accuracy(pred: &[u8], gold: &[u8]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Accuracy over the positions where `mask` is set; `None` if it selects
/// nothing.
pub fn masked_accuracy(pred: &[u8], gold: &[u8], mask: &[bool]) -> Result<Option<f64>> {
    check_lengths(pred.len(), gold.len())?;
    if mask.len() != gold.len() {
        return Err(Error::shape("accuracy", format!("mask of {} for {} labels", mask.len(), gold.len())));
    }
    let (mut hits, mut n) = (0usize, 0usize);
    for ((p, g), &m) in pred.iter().zip(gold).zip(mask) {
        if m {
            n += 1;
            hits += usize::from(p == g);
        }
    }
    Ok((n > 0).then(|| hits as f64 / n as f64))
}

/// Tokens whose gold label disagrees with the content-word rule: accented
/// function words and unaccented content words.
pub fn deviation_mask(gold: &[u8], content_mask: &[u8]) -> Vec<bool> {
    gold.iter().zip(content_mask).map(|(g, c)| g != c).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub accuracy: f64,
    pub n_tokens: usize,
    /// Indexed by label.
    pub classes: [ClassScores; 2],
}

pub fn class_report(pred: &[u8], gold: &[u8]) -> Result<ClassReport> {
    let accuracy = accuracy(pred, gold)?;
    let classes = [0u8, 1].map(|c| {
        let tp = pred.iter().zip(gold).filter(|&(&p, &g)| p == c && g == c).count() as f64;
        let predicted = pred.iter().filter(|&&p| p == c).count() as f64;
        let support = gold.iter().filter(|&&g| g == c).count();
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassScores {
            precision,
            recall,
            f1,
            support,
        }
    });
    Ok(ClassReport {
        accuracy,
        n_tokens: gold.len(),
        classes,
    })
}

/// Token-level report for a per-utterance predictor over a whole corpus.
pub fn evaluate_corpus<F>(c: &Corpus, mut predict: F) -> Result<ClassReport>
where
    F: FnMut(&Utterance) -> Vec<u8>,
{
    let mut pred = Vec::with_capacity(c.n_tokens());
    let mut gold = Vec::with_capacity(c.n_tokens());
    for u in &c.utterances {
        let p = predict(u);
        check_lengths(p.len(), u.len())?;
        pred.extend(p);
        gold.extend(u.labels());
    }
    class_report(&pred, &gold)
}
