//! Word-level pitch accent detection.
//!
//! The crate is organised the way the pipeline runs:
//!
//! * [`corpus`] ingests (or synthesizes) utterances with word timestamps and
//!   binary accent labels, and builds vocabularies.
//! * [`featurizer`] turns waveforms into six prosodic features per 10 ms
//!   frame: smoothed F0, RMS energy, loudness, zero-crossing rate, voicing
//!   probability and harmonics-to-noise ratio.
//! * [`nnkernel`] is a small reverse-mode autodiff engine with the layers the
//!   models need (strided 1-D convolution, LSTM, span pooling, ...) and Adam.
//! * [`model`] assembles the speech-only, text-only and combined labelers.
//! * [`baselines`] holds majority, content-word and accuracy helpers.
//! * [`experiments`] runs cross-validation, ablations, sweeps and searches.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod featurizer;
pub mod model;
pub mod nnkernel;
pub mod rng;

pub use error::{Error, Result};
