//! Corpus representation, ingestion, text preprocessing and vocabularies.

mod io;
mod synth;
mod text;
mod vocab;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_corpus, read_wav, save_corpus, write_wav, CorpusFormat};
pub use synth::{synth_corpus, write_synth_corpus, SynthCorpus, SynthSpec};
pub use text::{content_word_mask, preprocess_text, strip_contraction, StopwordList};
pub use vocab::{build_vocab, Vocabulary, UNK};

/// One word with its time span and binary accent label (1 = accented).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: u8,
}

impl Token {
    pub fn new(text: impl Into<String>, start_s: f64, end_s: f64, label: u8) -> Self {
        Token {
            text: text.into(),
            start_s,
            end_s,
            label,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_content(&self, stopwords: &StopwordList) -> bool {
        !stopwords.contains(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub tokens: Vec<Token>,
    #[serde(rename = "audio", default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<PathBuf>,
}

impl Utterance {
    /// Check the per-utterance invariants: at least one token, nonempty
    /// texts, binary labels, positive and non-overlapping ordered spans.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::InvalidUtterance {
            id: self.id.clone(),
            message,
        };
        if self.tokens.is_empty() {
            return Err(bad("no tokens".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.text.is_empty() {
                return Err(bad(format!("token {i} has empty text")));
            }
            if t.label > 1 {
                return Err(bad(format!("token {i} has label {} (expected 0 or 1)", t.label)));
            }
            if !(t.start_s.is_finite() && t.end_s.is_finite()) || t.start_s < 0.0 {
                return Err(bad(format!("token {i} has invalid timestamps")));
            }
            if t.end_s <= t.start_s {
                return Err(bad(format!(
                    "token {i} `{}` ends ({}) before it starts ({})",
                    t.text, t.end_s, t.start_s
                )));
            }
            if t.start_s < prev_end {
                return Err(bad(format!(
                    "token {i} `{}` overlaps the previous token ({} < {prev_end})",
                    t.text, t.start_s
                )));
            }
            prev_end = t.end_s;
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<u8> {
        self.tokens.iter().map(|t| t.label).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub sample_rate_hz: u32,
    /// Directory that relative audio references resolve against.
    pub audio_root: Option<PathBuf>,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>, sample_rate_hz: u32) -> Result<Self> {
        let c = Corpus {
            utterances,
            sample_rate_hz,
            audio_root: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::InvalidCorpus("sample rate must be positive".into()));
        }
        let mut seen = HashSet::new();
        for u in &self.utterances {
            u.validate()?;
            if !seen.insert(u.id.as_str()) {
                return Err(Error::InvalidUtterance {
                    id: u.id.clone(),
                    message: "duplicate utterance id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.utterances.iter().map(Utterance::len).sum()
    }

    pub fn n_accented(&self) -> usize {
        self.utterances
            .iter()
            .flat_map(|u| &u.tokens)
            .filter(|t| t.label == 1)
            .count()
    }

    pub fn ids(&self) -> Vec<String> {
        self.utterances.iter().map(|u| u.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.utterances
            .iter()
            .filter(|u| seen.insert(u.speaker.as_str()))
            .map(|u| u.speaker.clone())
            .collect()
    }

    /// Absolute (or root-relative) path of an utterance's waveform.
    pub fn audio_path(&self, u: &Utterance) -> Option<PathBuf> {
        let r = u.audio_ref.as_ref()?;
        Some(match &self.audio_root {
            Some(root) if r.is_relative() => root.join(r),
            _ => r.clone(),
        })
    }

    /// Subset of utterances in the order of `ids`.
    pub fn subset(&self, ids: &[String]) -> Result<Corpus> {
        let utterances = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidCorpus(format!("unknown utterance id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            utterances,
            sample_rate_hz: self.sample_rate_hz,
            audio_root: self.audio_root.clone(),
        })
    }

    pub fn with_audio_root(mut self, root: impl AsRef<Path>) -> Self {
        self.audio_root = Some(root.as_ref().to_path_buf());
        self
    }
}
