use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::{Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::featurizer::{FeatureMatrix, N_FEATURES};
use crate::nnkernel::Tensor;

use super::spans::{spans_from_bounds, token_frame_bounds};
use super::{AccentModel, ModelConfig};

/// One forward pass worth of input: a whole utterance, or a window of
/// tokens around a single scored token.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Id of the source utterance; windows of one utterance share it.
    pub utterance: String,
    /// Channel-major `[6, frames]`, present for speech input.
    pub frames: Option<Tensor<f32>>,
    /// Encoder-frame interval per token.
    pub spans: Vec<(usize, usize)>,
    pub token_ids: Vec<usize>,
    pub labels: Vec<usize>,
    /// Index of the only scored token, for windowed contexts.
    pub target: Option<usize>,
    /// Spans that needed repair when this example was built.
    pub repairs: usize,
}

impl Example {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_scored(&self) -> usize {
        if self.target.is_some() {
            1
        } else {
            self.labels.len()
        }
    }

    pub fn scored_labels(&self) -> Vec<usize> {
        match self.target {
            Some(t) => vec![self.labels[t]],
            None => self.labels.clone(),
        }
    }

    pub(crate) fn loss_mask(&self) -> Option<Vec<bool>> {
        self.target.map(|t| (0..self.labels.len()).map(|i| i == t).collect())
    }
}

fn channel_major(fm: &FeatureMatrix, start: usize, end: usize) -> Tensor<f32> {
    let n = end - start;
    let mut data = vec![0.0f32; N_FEATURES * n];
    for (t, i) in (start..end).enumerate() {
        for (c, &v) in fm.row(i).iter().enumerate() {
            data[c * n + t] = v;
        }
    }
    Tensor {
        shape: vec![N_FEATURES, n],
        data,
    }
}

/// Build model inputs for an utterance under `cfg.context`. Frames must
/// already be normalized and ablated.
pub fn build_examples(
    u: &Utterance,
    fm: Option<&FeatureMatrix>,
    vocab: Option<&Vocabulary>,
    cfg: &ModelConfig,
) -> Result<Vec<Example>> {
    let speech = cfg.input_mode.uses_speech();
    let fm = match (speech, fm) {
        (true, None) => {
            return Err(Error::Features(format!("utterance `{}` has no features for a speech model", u.id)));
        }
        (true, Some(fm)) if fm.n_frames() == 0 => {
            return Err(Error::Features(format!("utterance `{}` has no frames", u.id)));
        }
        (true, fm) => fm,
        (false, _) => None,
    };
    let token_ids: Vec<usize> = match (cfg.input_mode.uses_text(), vocab) {
        (true, Some(v)) => u.tokens.iter().map(|t| v.id(&t.text)).collect(),
        (true, None) => return Err(Error::Config("text input requires a vocabulary".into())),
        (false, _) => vec![0; u.tokens.len()],
    };
    let labels: Vec<usize> = u.tokens.iter().map(|t| t.label as usize).collect();
    let bounds = fm.map(|fm| token_frame_bounds(&u.tokens, fm.n_frames()));
    let tag = |e: Error| match e {
        Error::Spans { message, .. } => Error::Spans {
            id: u.id.clone(),
            message,
        },
        other => other,
    };

    let Some(radius) = cfg.context.radius() else {
        let (frames, spans, repairs) = match (fm, &bounds) {
            (Some(fm), Some(b)) => {
                let map = spans_from_bounds(b, fm.n_frames(), cfg).map_err(tag)?;
                (Some(channel_major(fm, 0, fm.n_frames())), map.spans, map.repairs)
            }
            _ => (None, Vec::new(), 0),
        };
        return Ok(vec![Example {
            utterance: u.id.clone(),
            frames,
            spans,
            token_ids,
            labels,
            target: None,
            repairs,
        }]);
    };

    let m = u.tokens.len();
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let lo = k.saturating_sub(radius);
        let hi = (k + radius).min(m - 1);
        let (frames, spans, repairs) = match (fm, &bounds) {
            (Some(fm), Some(b)) => {
                let n = fm.n_frames();
                let mut start = b[lo].0.min(n - 1);
                let mut end = b[hi].1.max(start + 1).min(n);
                if end <= start {
                    start = n - 1;
                    end = n;
                }
                let local: Vec<(usize, usize)> = b[lo..=hi]
                    .iter()
                    .map(|&(a, e)| (a.clamp(start, end) - start, e.clamp(start, end) - start))
                    .collect();
                let map = spans_from_bounds(&local, end - start, cfg).map_err(tag)?;
                (Some(channel_major(fm, start, end)), map.spans, map.repairs)
            }
            _ => (None, Vec::new(), 0),
        };
        out.push(Example {
            utterance: u.id.clone(),
            frames,
            spans,
            token_ids: token_ids[lo..=hi].to_vec(),
            labels: labels[lo..=hi].to_vec(),
            target: Some(k - lo),
            repairs,
        });
    }
    Ok(out)
}

/// Copy vectors for known words from a whitespace-separated text file
/// (`word v1 … vD` per line) into the model's embedding table. Returns the
/// number of vocabulary rows that were replaced.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, model: &mut AccentModel<f32>) -> Result<usize> {
    let dim = model.config().text_embed_dim;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut replaced = 0;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f32> = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let id = vocab.id(word);
        if id != vocab.unk_id() {
            model.set_embedding_row(id, &values)?;
            replaced += 1;
        }
    }
    Ok(replaced)
}
