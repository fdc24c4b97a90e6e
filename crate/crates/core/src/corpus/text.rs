use std::collections::HashSet;
use std::path::Path;

use super::Utterance;
use crate::error::{Error, Result};

const SHIPPED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Clitic suffixes removed by [`strip_contraction`], longest first.
const CLITICS: [&str; 7] = ["n't", "'ll", "'re", "'ve", "'s", "'d", "'m"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// The English list shipped in `data/stopwords_en.txt`.
    pub fn english() -> Self {
        Self::parse(SHIPPED_STOPWORDS).expect("shipped stopword list is nonempty")
    }

    /// One lowercase word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let words: HashSet<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        if words.is_empty() {
            return Err(Error::InvalidCorpus("stopword list is empty".into()));
        }
        Ok(StopwordList { words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// An empty list, under which every word counts as a content word.
    pub fn empty() -> Self {
        StopwordList {
            words: HashSet::new(),
        }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordList {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in sorted order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.words.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Remove a clitic suffix (`we'll` → `we`, `didn't` → `did`). Hyphenated and
/// other tokens pass through unchanged, as does a token that would become
/// empty.
pub fn strip_contraction(word: &str) -> String {
    let normalized = word.replace('\u{2019}', "'");
    let lower = normalized.to_lowercase();
    for suffix in CLITICS {
        if lower.ends_with(suffix) && lower.len() > suffix.len() {
            let cut = normalized.len() - suffix.len();
            return normalized[..cut].to_string();
        }
    }
    word.to_string()
}

pub fn preprocess_text(u: &Utterance) -> Utterance {
    let mut out = u.clone();
    for t in &mut out.tokens {
        t.text = strip_contraction(&t.text);
    }
    out
}

/// 1 for content words, 0 for stopwords (case-insensitive).
pub fn content_word_mask(u: &Utterance, stopwords: &StopwordList) -> Vec<u8> {
    u.tokens
        .iter()
        .map(|t| u8::from(!stopwords.contains(&t.text)))
        .collect()
}
