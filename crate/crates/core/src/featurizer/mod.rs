//! Six prosodic features per 10 ms frame.
//!
//! Column order is fixed: smoothed F0, RMS energy, loudness, zero-crossing
//! rate, voicing probability, HNR. Pitch-type features use a 40 ms window,
//! energy-type features a 25 ms window; both are centered on one shared
//! 10 ms grid so every column has the same frame count.

mod cache;
mod descriptors;
mod norm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::FeatureCache;
pub use descriptors::{
    f0_autocorr, hnr, hnr_from_r, loudness, loudness_from_rms, rms_energy, smooth_f0, weighted_rms, zcr,
    PitchEstimate, PitchTracker, HNR_CLAMP_DB, LOUDNESS_EXPONENT, OCTAVE_COST,
};
pub use norm::{ablate, apply_norm, fit_norm, Ablation, FeatureGroup, NormStats};

pub const N_FEATURES: usize = 6;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["f0_smooth", "rms_energy", "loudness", "zcr", "voicing_prob", "hnr_db"];
pub const VOICING_THRESHOLD: f64 = 0.45;
/// Bumped whenever extraction output changes; part of the cache key.
pub const FEATURIZER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Audio("empty waveform".into()));
        }
        if sample_rate_hz < 8000 {
            return Err(Error::Audio(format!("sample rate {sample_rate_hz} Hz is below 8 kHz")));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn scaled(&self, c: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * c).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    pub hop_s: f64,
    pub pitch_window_s: f64,
    pub energy_window_s: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub median_width: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            hop_s: 0.010,
            pitch_window_s: 0.040,
            energy_window_s: 0.025,
            fmin_hz: 50.0,
            fmax_hz: 500.0,
            median_width: 5,
        }
    }
}

impl FeatureParams {
    pub fn max_window_s(&self) -> f64 {
        self.pitch_window_s.max(self.energy_window_s)
    }
}

/// Frame centers shared by all feature windows, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub hop: usize,
    pub span: usize,
    pub n_frames: usize,
}

fn seconds_to_samples(s: f64, sr: u32) -> usize {
    (s * f64::from(sr)).round() as usize
}

impl FrameGrid {
    /// `n = floor((len - span) / hop) + 1` frames, centered at
    /// `span/2 + i*hop`.
    pub fn new(n_samples: usize, sample_rate_hz: u32, span_s: f64, hop_s: f64) -> Result<Self> {
        let span = seconds_to_samples(span_s, sample_rate_hz);
        let hop = seconds_to_samples(hop_s, sample_rate_hz);
        if hop == 0 || span == 0 {
            return Err(Error::Features("window and hop must span at least one sample".into()));
        }
        if n_samples < span {
            return Err(Error::Features(format!(
                "waveform of {n_samples} samples is shorter than one {span}-sample window"
            )));
        }
        Ok(FrameGrid {
            hop,
            span,
            n_frames: (n_samples - span) / hop + 1,
        })
    }

    pub fn center(&self, i: usize) -> usize {
        self.span / 2 + i * self.hop
    }
}

/// Slice the waveform into `window_s` windows on a grid whose own span is
/// `window_s`.
pub fn frame_signal(w: &Waveform, window_s: f64, hop_s: f64) -> Result<Vec<&[f64]>> {
    if window_s < hop_s {
        return Err(Error::Features(format!("window {window_s} s shorter than hop {hop_s} s")));
    }
    let grid = FrameGrid::new(w.samples.len(), w.sample_rate_hz, window_s, hop_s)?;
    frame_signal_on_grid(w, window_s, &grid)
}

/// Windows of length `window_s` centered on an existing grid.
pub fn frame_signal_on_grid<'a>(w: &'a Waveform, window_s: f64, grid: &FrameGrid) -> Result<Vec<&'a [f64]>> {
    let len = seconds_to_samples(window_s, w.sample_rate_hz);
    if len == 0 || len > grid.span {
        return Err(Error::Features(format!(
            "window of {len} samples does not fit the {}-sample grid",
            grid.span
        )));
    }
    Ok((0..grid.n_frames)
        .map(|i| {
            let start = grid.center(i) - len / 2;
            &w.samples[start..start + len]
        })
        .collect())
}

fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Six features for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub f0_smooth: f64,
    pub rms_energy: f64,
    pub loudness: f64,
    pub zcr: f64,
    pub voicing_prob: f64,
    pub hnr_db: f64,
}

impl FrameFeatures {
    pub fn to_array(self) -> [f64; N_FEATURES] {
        [
            self.f0_smooth,
            self.rms_energy,
            self.loudness,
            self.zcr,
            self.voicing_prob,
            self.hnr_db,
        ]
    }

    pub fn from_slice(v: &[f32]) -> Self {
        FrameFeatures {
            f0_smooth: f64::from(v[0]),
            rms_energy: f64::from(v[1]),
            loudness: f64::from(v[2]),
            zcr: f64::from(v[3]),
            voicing_prob: f64::from(v[4]),
            hnr_db: f64::from(v[5]),
        }
    }
}

/// Row-major `[n, 6]` frame matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f32>,
    n: usize,
    pub hop_s: f64,
}

impl FeatureMatrix {
    pub fn from_rows(data: Vec<f32>, hop_s: f64) -> Result<Self> {
        if data.is_empty() || data.len() % N_FEATURES != 0 {
            return Err(Error::Features(format!(
                "feature data length {} is not a positive multiple of {N_FEATURES}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Features("non-finite feature value".into()));
        }
        let n = data.len() / N_FEATURES;
        Ok(FeatureMatrix { data, n, hop_s })
    }

    pub fn n_frames(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * N_FEATURES..(i + 1) * N_FEATURES]
    }

    pub fn frame(&self, i: usize) -> FrameFeatures {
        FrameFeatures::from_slice(self.row(i))
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f32> + '_ {
        self.data.iter().skip(c).step_by(N_FEATURES).copied()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data[start * N_FEATURES..end * N_FEATURES].to_vec(),
            n: end - start,
            hop_s: self.hop_s,
        }
    }
}

/// Per-feature columns before stacking; exposed for alignment checks.
#[derive(Debug, Clone)]
pub struct FeatureTracks {
    pub f0_smooth: Vec<f64>,
    pub rms_energy: Vec<f64>,
    pub loudness: Vec<f64>,
    pub zcr: Vec<f64>,
    pub voicing_prob: Vec<f64>,
    pub hnr_db: Vec<f64>,
}

impl FeatureTracks {
    pub fn lengths(&self) -> [usize; N_FEATURES] {
        [
            self.f0_smooth.len(),
            self.rms_energy.len(),
            self.loudness.len(),
            self.zcr.len(),
            self.voicing_prob.len(),
            self.hnr_db.len(),
        ]
    }
}

pub fn extract_tracks(w: &Waveform, params: &FeatureParams) -> Result<FeatureTracks> {
    let grid = FrameGrid::new(w.samples.len(), w.sample_rate_hz, params.max_window_s(), params.hop_s)?;
    let pitch_frames = frame_signal_on_grid(w, params.pitch_window_s, &grid)?;
    let energy_frames = frame_signal_on_grid(w, params.energy_window_s, &grid)?;

    let tracker = PitchTracker::new(
        w.sample_rate_hz,
        pitch_frames[0].len(),
        params.fmin_hz,
        params.fmax_hz,
        VOICING_THRESHOLD,
    );
    let mut raw_f0 = Vec::with_capacity(grid.n_frames);
    let mut voicing_prob = Vec::with_capacity(grid.n_frames);
    let mut hnr_db = Vec::with_capacity(grid.n_frames);
    for frame in &pitch_frames {
        let est = tracker.estimate(frame);
        raw_f0.push(est.f0);
        voicing_prob.push(est.voicing_prob);
        hnr_db.push(hnr_from_r(est.peak));
    }

    let window = hann(energy_frames[0].len());
    let rms: Vec<f64> = energy_frames.iter().map(|f| weighted_rms(f, &window)).collect();
    Ok(FeatureTracks {
        f0_smooth: smooth_f0(&raw_f0, params.median_width),
        loudness: rms.iter().map(|&r| loudness_from_rms(r)).collect(),
        rms_energy: rms,
        zcr: energy_frames.iter().map(|f| zcr(f)).collect(),
        voicing_prob,
        hnr_db,
    })
}

pub fn extract_features(w: &Waveform, params: &FeatureParams) -> Result<FeatureMatrix> {
    let t = extract_tracks(w, params)?;
    let n = t.f0_smooth.len();
    let mut data = Vec::with_capacity(n * N_FEATURES);
    for i in 0..n {
        data.extend(
            [
                t.f0_smooth[i],
                t.rms_energy[i],
                t.loudness[i],
                t.zcr[i],
                t.voicing_prob[i],
                t.hnr_db[i],
            ]
            .map(|v| v as f32),
        );
    }
    FeatureMatrix::from_rows(data, params.hop_s)
}
