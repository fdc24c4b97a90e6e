use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{preprocess_text, read_wav, Corpus, SynthCorpus, Utterance};
use crate::error::{Error, Result};
use crate::featurizer::{extract_features, FeatureCache, FeatureMatrix, FeatureParams};

/// A corpus with contraction-stripped token text and, for speech models,
/// raw (unnormalized) frame features per utterance.
#[derive(Debug, Clone)]
pub struct Dataset {
    corpus: Corpus,
    features: BTreeMap<String, FeatureMatrix>,
    index: HashMap<String, usize>,
    embeddings: Option<PathBuf>,
}

impl Dataset {
    pub fn new(corpus: Corpus, features: BTreeMap<String, FeatureMatrix>) -> Result<Self> {
        let corpus = Corpus {
            utterances: corpus.utterances.iter().map(preprocess_text).collect(),
            ..corpus
        };
        if !features.is_empty() {
            if let Some(u) = corpus.utterances.iter().find(|u| !features.contains_key(&u.id)) {
                return Err(Error::Features(format!("no features for utterance `{}`", u.id)));
            }
        }
        let index = corpus
            .utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.clone(), i))
            .collect();
        Ok(Dataset {
            corpus,
            features,
            index,
            embeddings: None,
        })
    }

    pub fn text_only(corpus: Corpus) -> Result<Self> {
        Self::new(corpus, BTreeMap::new())
    }

    /// Featurize in-memory synthetic audio.
    pub fn from_synth(s: &SynthCorpus, params: &FeatureParams) -> Result<Self> {
        let mats = s
            .waveforms
            .par_iter()
            .map(|w| extract_features(w, params))
            .collect::<Result<Vec<_>>>()?;
        let features = s.corpus.utterances.iter().map(|u| u.id.clone()).zip(mats).collect();
        Self::new(s.corpus.clone(), features)
    }

    /// Read every utterance's WAV and featurize it, going through `cache`
    /// when given.
    pub fn featurize(corpus: Corpus, params: &FeatureParams, cache: Option<&FeatureCache>) -> Result<Self> {
        let mats = corpus
            .utterances
            .par_iter()
            .map(|u| {
                let path = corpus
                    .audio_path(u)
                    .ok_or_else(|| Error::Audio(format!("utterance `{}` has no audio", u.id)))?;
                let key = cache.map(|_| FeatureCache::key(params, &u.id, &path));
                if let (Some(c), Some(k)) = (cache, &key) {
                    if let Some(fm) = c.get(k)? {
                        return Ok(fm);
                    }
                }
                let fm = extract_features(&read_wav(&path)?, params)?;
                if let (Some(c), Some(k)) = (cache, &key) {
                    c.put(k, &fm)?;
                }
                Ok(fm)
            })
            .collect::<Result<Vec<_>>>()?;
        let features = corpus.utterances.iter().map(|u| u.id.clone()).zip(mats).collect();
        Self::new(corpus, features)
    }

    /// Word vectors copied into every text model's embedding table after
    /// initialization.
    pub fn with_embeddings(mut self, path: impl Into<PathBuf>) -> Self {
        self.embeddings = Some(path.into());
        self
    }

    pub fn embeddings(&self) -> Option<&Path> {
        self.embeddings.as_deref()
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn has_features(&self) -> bool {
        !self.features.is_empty()
    }

    pub fn features(&self, id: &str) -> Option<&FeatureMatrix> {
        self.features.get(id)
    }

    pub fn utterance(&self, id: &str) -> Result<&Utterance> {
        self.index
            .get(id)
            .map(|&i| &self.corpus.utterances[i])
            .ok_or_else(|| Error::Experiment(format!("unknown utterance id `{id}`")))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.corpus.ids()
    }
}
