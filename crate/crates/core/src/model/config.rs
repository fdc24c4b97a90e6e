use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkernel::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Speech,
    Text,
    SpeechText,
}

impl InputMode {
    pub fn uses_speech(self) -> bool {
        matches!(self, InputMode::Speech | InputMode::SpeechText)
    }

    pub fn uses_text(self) -> bool {
        matches!(self, InputMode::Text | InputMode::SpeechText)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    FullUtterance,
    ThreeToken,
    OneToken,
}

impl Context {
    /// Neighbours on each side of the labelled token, `None` for the whole
    /// utterance.
    pub fn radius(self) -> Option<usize> {
        match self {
            Context::FullUtterance => None,
            Context::ThreeToken => Some(1),
            Context::OneToken => Some(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Sum,
    Max,
}

macro_rules! snake_case_enum_str {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.replace('-', "_").as_str() {
                    $($s => Ok(<$t>::$v),)*
                    other => Err(Error::Config(format!("unknown {} `{other}`", stringify!($t)))),
                }
            }
        }
    };
}

snake_case_enum_str!(InputMode { Speech => "speech", Text => "text", SpeechText => "speech_text" });
snake_case_enum_str!(Context { FullUtterance => "full_utterance", ThreeToken => "three_token", OneToken => "one_token" });
snake_case_enum_str!(Pooling { Sum => "sum", Max => "max" });

/// Architecture and training hyperparameters. Defaults are the selected
/// configuration of the original search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub cnn_layers: usize,
    pub cnn_kernel_width: usize,
    pub cnn_channels: Vec<usize>,
    pub cnn_stride: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub pooling: Pooling,
    pub text_embed_dim: usize,
    pub vocab_size: usize,
    pub input_mode: InputMode,
    pub context: Context,
    pub use_lstm: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cnn_layers: 3,
            cnn_kernel_width: 11,
            cnn_channels: vec![128, 256, 256],
            cnn_stride: 2,
            lstm_layers: 2,
            lstm_hidden: 128,
            dropout: 0.5,
            weight_decay: 1e-5,
            pooling: Pooling::Sum,
            text_embed_dim: 300,
            vocab_size: 3000,
            input_mode: InputMode::Speech,
            context: Context::FullUtterance,
            use_lstm: true,
            learning_rate: 1e-3,
            epochs: 25,
            batch_size: 64,
            grad_clip: 5.0,
        }
    }
}

/// 128 kernels in the first layer and 256 in every later one.
pub fn default_channels(layers: usize) -> Vec<usize> {
    (0..layers).map(|i| if i == 0 { 128 } else { 256 }).collect()
}

impl ModelConfig {
    pub fn speech() -> Self {
        Self::default()
    }

    pub fn text() -> Self {
        ModelConfig {
            input_mode: InputMode::Text,
            ..Self::default()
        }
    }

    pub fn speech_text() -> Self {
        ModelConfig {
            input_mode: InputMode::SpeechText,
            ..Self::default()
        }
    }

    /// Set the CNN depth, rebuilding the channel list as `base, 2·base, ...`
    /// capped at `2·base` (the 128/256 pattern for `base = 128`).
    pub fn with_cnn_layers(mut self, layers: usize) -> Self {
        let base = self.cnn_channels.first().copied().unwrap_or(128);
        self.cnn_layers = layers;
        self.cnn_channels = (0..layers).map(|i| if i == 0 { base } else { 2 * base }).collect();
        self
    }

    /// Context and architecture together; one-token context forces CNN only.
    pub fn with_context(mut self, context: Context, use_lstm: bool) -> Self {
        self.context = context;
        self.use_lstm = use_lstm && context != Context::OneToken;
        self
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    /// Product of the CNN strides: the frame-rate reduction of the encoder.
    pub fn downsample_factor(&self) -> usize {
        self.cnn_stride.pow(self.cnn_layers as u32)
    }

    pub fn cnn_padding(&self) -> usize {
        self.cnn_kernel_width / 2
    }

    /// Encoder output length for `frames` input frames.
    pub fn encoder_length(&self, frames: usize) -> usize {
        let pad = self.cnn_padding();
        (0..self.cnn_layers).fold(frames, |len, _| {
            if len + 2 * pad < self.cnn_kernel_width {
                0
            } else {
                (len + 2 * pad - self.cnn_kernel_width) / self.cnn_stride + 1
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.context == Context::OneToken && self.use_lstm {
            return bad("one-token context is CNN only (use_lstm must be false)".into());
        }
        if self.input_mode.uses_speech() {
            if self.cnn_layers == 0 {
                return bad("speech input needs at least one CNN layer".into());
            }
            if self.cnn_channels.len() != self.cnn_layers {
                return bad(format!(
                    "cnn_channels has {} entries for {} layers",
                    self.cnn_channels.len(),
                    self.cnn_layers
                ));
            }
            if self.cnn_kernel_width == 0 || self.cnn_stride == 0 || self.cnn_channels.contains(&0) {
                return bad("CNN widths, strides and channel counts must be positive".into());
            }
        }
        if self.input_mode.uses_text() && (self.text_embed_dim == 0 || self.vocab_size == 0) {
            return bad("text input needs a positive embedding size and vocabulary".into());
        }
        if self.use_lstm && (self.lstm_layers == 0 || self.lstm_hidden == 0) {
            return bad("LSTM layers and hidden size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.weight_decay < 0.0 || self.learning_rate <= 0.0 || self.grad_clip <= 0.0 {
            return bad("learning rate and clip must be positive, weight decay non-negative".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        Ok(())
    }
}
