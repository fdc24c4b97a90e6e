//! Token-level accent labelers over speech frames, word embeddings, or both.
//!
//! The speech path runs a strided 1-D CNN over frame features, pools the
//! output frames inside each token's span, and optionally feeds the pooled
//! vectors through a bidirectional LSTM before a per-token linear layer.

mod config;
mod examples;
mod spans;

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::featurizer::{Ablation, NormStats};
use crate::nnkernel::{
    clip_global_norm, load_checkpoint, save_checkpoint, Adam, Gradients, Graph, ParamId, ParamStore, Scalar, Tensor,
    Var,
};
use crate::rng::{self, Rng};

pub use config::{default_channels, Context, InputMode, ModelConfig, Pooling};
pub use examples::{build_examples, load_embeddings, Example};
pub use spans::{frame_index, map_spans, spans_from_bounds, token_frame_bounds, TokenSpanMap, FRAME_HOP_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: [f64; 2],
    pub p_accent: f64,
    pub label: u8,
}

impl Prediction {
    pub fn from_logits(l0: f64, l1: f64) -> Self {
        // Stable two-class softmax.
        let p_accent = if l1 >= l0 {
            1.0 / (1.0 + (l0 - l1).exp())
        } else {
            let e = (l1 - l0).exp();
            e / (1.0 + e)
        };
        Prediction {
            logits: [l0, l1],
            p_accent,
            label: u8::from(l1 > l0),
        }
    }

    pub fn probs(&self) -> [f64; 2] {
        [1.0 - self.p_accent, self.p_accent]
    }
}

#[derive(Debug, Clone, Copy)]
struct LstmDir {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<(ParamId, ParamId)>,
    embed: Option<ParamId>,
    lstm: Vec<[LstmDir; 2]>,
    out: (ParamId, ParamId),
}

/// A labeler and its parameters.
#[derive(Debug, Clone)]
pub struct AccentModel<T: Scalar = f32> {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamStore<T>,
    layout: Layout,
}

fn uniform_init<T: Scalar>(shape: Vec<usize>, fan_in: usize, r: &mut Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    Tensor {
        shape,
        data: (0..n).map(|_| T::from_f64(dist.sample(r))).collect(),
    }
}

impl<T: Scalar> AccentModel<T> {
    /// Fresh parameters. `vocab_size` counts the UNK row and is ignored for
    /// speech-only models.
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, "model-init", &[]);
        let mut params = ParamStore::new();
        let mut conv = Vec::new();
        let mut width = 0;
        if config.input_mode.uses_speech() {
            let mut c_in = crate::featurizer::N_FEATURES;
            for (i, &c_out) in config.cnn_channels.iter().enumerate() {
                let kw = config.cnn_kernel_width;
                let w = params.add(format!("conv{i}.weight"), uniform_init(vec![c_out, c_in, kw], c_in * kw, &mut r));
                let b = params.add(format!("conv{i}.bias"), Tensor::zeros(vec![c_out]));
                conv.push((w, b));
                c_in = c_out;
            }
            width += c_in;
        }
        let embed = if config.input_mode.uses_text() {
            if vocab_size == 0 {
                return Err(Error::Config("text input needs a vocabulary".into()));
            }
            let d = config.text_embed_dim;
            let data = (0..vocab_size * d)
                .map(|_| T::from_f64(StandardNormal.sample(&mut r)))
                .collect();
            width += d;
            Some(params.add("embed.weight", Tensor { shape: vec![vocab_size, d], data }))
        } else {
            None
        };
        let mut lstm = Vec::new();
        if config.use_lstm {
            let h = config.lstm_hidden;
            for l in 0..config.lstm_layers {
                let mut dirs = Vec::with_capacity(2);
                for dir in ["fwd", "bwd"] {
                    let w_ih = params.add(format!("lstm{l}.{dir}.w_ih"), uniform_init(vec![4 * h, width], width, &mut r));
                    let w_hh = params.add(format!("lstm{l}.{dir}.w_hh"), uniform_init(vec![4 * h, h], h, &mut r));
                    let mut b = Tensor::zeros(vec![4 * h]);
                    b.data[h..2 * h].fill(T::one());
                    let bias = params.add(format!("lstm{l}.{dir}.bias"), b);
                    dirs.push(LstmDir { w_ih, w_hh, bias });
                }
                lstm.push([dirs[0], dirs[1]]);
                width = 2 * h;
            }
        }
        let ow = params.add("out.weight", uniform_init(vec![2, width], width, &mut r));
        let ob = params.add("out.bias", Tensor::zeros(vec![2]));
        Ok(AccentModel {
            config,
            vocab_size,
            params,
            layout: Layout {
                conv,
                embed,
                lstm,
                out: (ow, ob),
            },
        })
    }

    /// Rebuild a model around stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, vocab_size: usize, stored: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, vocab_size, 0)?;
        if stored.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                stored.len(),
                model.params.len()
            )));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let src = stored
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            let src = stored.get(src);
            if src.shape != model.params.get(id).shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    src.shape,
                    model.params.get(id).shape
                )));
            }
            model.params.get_mut(id).data.clone_from(&src.data);
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    /// Overwrite embedding rows. Rows are `[vocab_size, text_embed_dim]`.
    pub fn set_embedding_row(&mut self, row: usize, values: &[f32]) -> Result<()> {
        let id = self
            .layout
            .embed
            .ok_or_else(|| Error::Config("model has no text embedding".into()))?;
        let d = self.config.text_embed_dim;
        if values.len() != d || row >= self.vocab_size {
            return Err(Error::shape("embedding", format!("row {row} with {} values", values.len())));
        }
        let t = self.params.get_mut(id);
        for (dst, &v) in t.data[row * d..(row + 1) * d].iter_mut().zip(values) {
            *dst = T::from_f64(v as f64);
        }
        Ok(())
    }

    /// CNN encoder and span pooling: `[m, C_last]` token vectors.
    pub fn encode_speech(&self, g: &mut Graph<'_, T>, ex: &Example, mut dropout: Option<&mut Rng>) -> Result<Var> {
        let frames = ex
            .frames
            .as_ref()
            .ok_or_else(|| Error::Config("speech input requested but the example has no frames".into()))?;
        let mut x = g.input(frames.cast())?;
        let pad = self.config.cnn_padding();
        for &(w, b) in &self.layout.conv {
            let (w, b) = (g.param(w), g.param(b));
            x = g.conv1d(x, w, b, self.config.cnn_stride, pad)?;
            x = g.relu(x)?;
            if let Some(r) = dropout.as_deref_mut() {
                x = g.dropout(x, self.config.dropout, r)?;
            }
        }
        match self.config.pooling {
            Pooling::Sum => g.sum_over_spans(x, &ex.spans),
            Pooling::Max => g.max_over_spans(x, &ex.spans),
        }
    }

    /// Token logits `[m, 2]`. Dropout is active when an RNG is supplied.
    pub fn forward(&self, g: &mut Graph<'_, T>, ex: &Example, mut dropout: Option<&mut Rng>) -> Result<Var> {
        let speech = if self.config.input_mode.uses_speech() {
            Some(self.encode_speech(g, ex, dropout.as_deref_mut())?)
        } else {
            None
        };
        let text = match self.layout.embed {
            Some(id) => {
                if let Some(&bad) = ex.token_ids.iter().find(|&&t| t >= self.vocab_size) {
                    return Err(Error::shape("embedding", format!("token id {bad} outside vocabulary of {}", self.vocab_size)));
                }
                let table = g.param(id);
                Some(g.embedding(table, &ex.token_ids)?)
            }
            None => None,
        };
        let mut x = match (speech, text) {
            (Some(s), Some(t)) => g.concat(s, t)?,
            (Some(s), None) => s,
            (None, Some(t)) => t,
            (None, None) => unreachable!("validated input mode"),
        };
        if !self.layout.lstm.is_empty() {
            for [fwd, bwd] in &self.layout.lstm {
                let f = self.lstm_dir(g, x, fwd, false)?;
                let b = self.lstm_dir(g, x, bwd, true)?;
                x = g.concat(f, b)?;
            }
            if let Some(r) = dropout {
                x = g.dropout(x, self.config.dropout, r)?;
            }
        }
        let (w, b) = (g.param(self.layout.out.0), g.param(self.layout.out.1));
        g.linear(x, w, b)
    }

    fn lstm_dir(&self, g: &mut Graph<'_, T>, x: Var, d: &LstmDir, reverse: bool) -> Result<Var> {
        let (w_ih, w_hh, bias) = (g.param(d.w_ih), g.param(d.w_hh), g.param(d.bias));
        g.lstm(x, w_ih, w_hh, bias, None, None, reverse)
    }

    /// Predictions for the scored tokens of one example (the centre token of
    /// a window, or every token of a full utterance).
    pub fn predict(&self, ex: &Example) -> Result<Vec<Prediction>> {
        let mut g = Graph::new(&self.params);
        let logits = self.forward(&mut g, ex, None)?;
        let v = g.value(logits);
        let row = |i: usize| Prediction::from_logits(v[2 * i].as_f64(), v[2 * i + 1].as_f64());
        Ok(match ex.target {
            Some(t) => vec![row(t)],
            None => (0..ex.labels.len()).map(row).collect(),
        })
    }

    /// Predictions for a whole utterance from its examples: one example for
    /// full-utterance context, one window per token otherwise.
    pub fn predict_utterance(&self, examples: &[Example]) -> Result<Vec<Prediction>> {
        let mut out = Vec::new();
        for ex in examples {
            out.extend(self.predict(ex)?);
        }
        Ok(out)
    }

    /// Gradients of `weight · loss(ex)`; returns the unweighted loss.
    pub fn loss_and_grads(&self, ex: &Example, weight: f64, dropout: Option<&mut Rng>) -> Result<(f64, Gradients<T>)> {
        let mut g = Graph::new(&self.params);
        let logits = self.forward(&mut g, ex, dropout)?;
        let mask = ex.loss_mask();
        let loss = g.softmax_xent(logits, &ex.labels, mask.as_deref())?;
        let scaled = g.weighted_sum(&[(loss, T::from_f64(weight))])?;
        let grads = g.backward(scaled)?;
        Ok((g.scalar(loss).as_f64(), Gradients::from_params(grads.into_params())))
    }

    /// One optimizer step on a batch: mean cross-entropy over every scored
    /// token in the batch, global-norm clipping, then Adam. Returns the loss.
    pub fn train_step(&mut self, batch: &[&Example], adam: &mut Adam<T>, r: &mut Rng) -> Result<f64> {
        let total: usize = batch.iter().map(|e| e.n_scored()).sum();
        if total == 0 {
            return Ok(0.0);
        }
        let mut acc: Option<Gradients<T>> = None;
        let mut loss = 0.0;
        for ex in batch {
            let w = ex.n_scored() as f64 / total as f64;
            let drop_rng = (self.config.dropout > 0.0).then_some(&mut *r);
            let (l, g) = self.loss_and_grads(ex, w, drop_rng)?;
            loss += w * l;
            match acc.as_mut() {
                Some(a) => a.accumulate(&g),
                None => acc = Some(g),
            }
        }
        let mut grads = acc.expect("nonempty batch");
        let norm = clip_global_norm(&mut grads, self.config.grad_clip);
        if !norm.is_finite() || !loss.is_finite() {
            return Err(Error::NonFinite {
                op: "train_step",
                stage: "backward",
            });
        }
        adam.step(&mut self.params, &grads);
        Ok(loss)
    }

    pub fn cast<U: Scalar>(&self) -> AccentModel<U> {
        AccentModel {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }
}

/// Everything needed to reuse a trained model on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub vocab: Option<Vocabulary>,
    pub norm: NormStats,
    pub ablation: Ablation,
}

impl AccentModel<f32> {
    pub fn save(&self, path: impl AsRef<Path>, meta: &ModelMeta) -> Result<()> {
        let json = serde_json::to_string(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        save_checkpoint(path, &self.params, &json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, ModelMeta)> {
        let (params, json) = load_checkpoint(path)?;
        let meta: ModelMeta = serde_json::from_str(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let vocab_size = meta.vocab.as_ref().map_or(0, |v| v.size());
        let model = Self::from_params(meta.config.clone(), vocab_size, params)?;
        Ok((model, meta))
    }
}

/// Fraction of scored tokens whose predicted label matches gold.
pub fn example_accuracy(preds: &[Prediction], examples: &[Example]) -> f64 {
    let gold: Vec<usize> = examples.iter().flat_map(|e| e.scored_labels()).collect();
    assert_eq!(gold.len(), preds.len(), "prediction count differs from scored tokens");
    if gold.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(&gold).filter(|(p, &g)| p.label as usize == g).count();
    hits as f64 / gold.len() as f64
}

/// Reorder a batch deterministically.
pub fn shuffle_indices(n: usize, r: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    idx
}

#[cfg(test)]
mod tests;
