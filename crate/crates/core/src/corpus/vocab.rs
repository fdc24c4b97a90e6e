use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Word-type ids, most frequent first, with UNK in the last slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    types: Vec<String>,
    id_of: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    types: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_ranked_types(r.types)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr { types: v.types }
    }
}

impl Vocabulary {
    /// Build from types already in rank order (no UNK entry).
    pub fn from_ranked_types(types: Vec<String>) -> Self {
        let id_of = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { types, id_of }
    }

    pub fn unk_id(&self) -> usize {
        self.types.len()
    }

    /// Number of ids including UNK.
    pub fn size(&self) -> usize {
        self.types.len() + 1
    }

    pub fn id(&self, word: &str) -> usize {
        self.id_of
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(self.unk_id())
    }

    pub fn word(&self, id: usize) -> &str {
        self.types.get(id).map_or(UNK, String::as_str)
    }

    /// Ranked types, excluding UNK.
    pub fn types(&self) -> &[String] {
        &self.types
    }

    /// Keep the `k` most frequent types.
    pub fn truncated(&self, k: usize) -> Self {
        Self::from_ranked_types(self.types.iter().take(k).cloned().collect())
    }
}

/// Rank lowercased types by frequency, ties broken lexicographically, keep
/// the top `max_size`, and append UNK.
pub fn build_vocab(corpus: &Corpus, max_size: usize) -> Result<Vocabulary> {
    if max_size == 0 {
        return Err(Error::InvalidCorpus("vocabulary size must be at least 1".into()));
    }
    if corpus.n_tokens() == 0 {
        return Err(Error::InvalidCorpus("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in corpus.utterances.iter().flat_map(|u| &u.tokens) {
        *counts.entry(t.text.to_lowercase()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Ok(Vocabulary::from_ranked_types(
        ranked.into_iter().map(|(t, _)| t).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Token, Utterance};
    use proptest::prelude::*;

    fn corpus_of(words: &[&str]) -> Corpus {
        Corpus::new(
            vec![Utterance {
                id: "u".into(),
                speaker: "s".into(),
                tokens: words
                    .iter()
                    .enumerate()
                    .map(|(i, w)| Token::new(*w, i as f64, i as f64 + 0.5, 0))
                    .collect(),
                audio_ref: None,
            }],
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn keeps_most_frequent_plus_unk() {
        let v = build_vocab(&corpus_of(&["a", "b", "a", "a"]), 1).unwrap();
        assert_eq!(v.size(), 2);
        assert_eq!(v.id("a"), 0);
        assert_eq!(v.id("b"), v.unk_id());
        assert_eq!(v.word(v.unk_id()), UNK);
    }

    #[test]
    fn large_max_keeps_everything() {
        let v = build_vocab(&corpus_of(&["x", "y", "z", "y"]), 3000).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.types(), ["y", "x", "z"]);
    }

    #[test]
    fn zero_size_and_empty_corpus_rejected() {
        assert!(build_vocab(&corpus_of(&["a"]), 0).is_err());
        let empty = Corpus::new(vec![], 16_000).unwrap();
        assert!(build_vocab(&empty, 5).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocab(&corpus_of(&["b", "a", "b"]), 10).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn truncation_is_nested(words in proptest::collection::vec("[a-f]{1,2}", 1..60), k1 in 1usize..10, extra in 1usize..10) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let c = corpus_of(&refs);
            let small = build_vocab(&c, k1).unwrap();
            let big = build_vocab(&c, k1 + extra).unwrap();
            for (i, t) in small.types().iter().enumerate() {
                prop_assert_eq!(big.id(t), i);
            }
            prop_assert_eq!(big.truncated(k1), small);
        }
    }
}
