//! Per-window acoustic descriptors.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Loudness exponent (Stevens' power law applied to RMS).
pub const LOUDNESS_EXPONENT: f64 = 0.3;
/// Penalty per octave of lag, so a period's multiples never outrank it.
pub const OCTAVE_COST: f64 = 0.01;
pub const HNR_CLAMP_DB: f64 = 60.0;
const R_CLAMP: f64 = 1e-6;

pub fn rms_energy(window: &[f64]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    (window.iter().map(|x| x * x).sum::<f64>() / window.len() as f64).sqrt()
}

/// RMS under a weighting window, normalized by the weights so a constant
/// signal keeps its amplitude.
pub fn weighted_rms(window: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    let acc: f64 = window.iter().zip(weights).map(|(x, w)| w * x * x).sum();
    (acc / wsum).sqrt()
}

pub fn loudness_from_rms(rms: f64) -> f64 {
    rms.max(0.0).powf(LOUDNESS_EXPONENT)
}

pub fn loudness(window: &[f64]) -> f64 {
    loudness_from_rms(rms_energy(window))
}

/// Fraction of adjacent sample pairs whose signs differ (zero counts as
/// positive).
pub fn zcr(window: &[f64]) -> f64 {
    if window.len() < 2 {
        return 0.0;
    }
    let changes = window
        .windows(2)
        .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
        .count();
    changes as f64 / (window.len() - 1) as f64
}

/// Harmonics-to-noise ratio in dB from a normalized autocorrelation peak.
pub fn hnr_from_r(r: f64) -> f64 {
    let r = r.clamp(R_CLAMP, 1.0 - R_CLAMP);
    (10.0 * (r / (1.0 - r)).log10()).clamp(-HNR_CLAMP_DB, HNR_CLAMP_DB)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    /// Hz, 0 when unvoiced.
    pub f0: f64,
    /// Clamped peak of the normalized autocorrelation.
    pub voicing_prob: f64,
    /// Unclamped interpolated peak, the input to HNR.
    pub peak: f64,
}

/// Normalized cross-correlation pitch tracker for one analysis window.
pub struct PitchTracker {
    sample_rate: f64,
    min_lag: usize,
    max_lag: usize,
    voicing_threshold: f64,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PitchTracker {
    pub fn new(sample_rate_hz: u32, window_len: usize, fmin: f64, fmax: f64, voicing_threshold: f64) -> Self {
        let sr = f64::from(sample_rate_hz);
        let min_lag = ((sr / fmax).floor() as usize).max(2);
        let max_lag = ((sr / fmin).ceil() as usize).min(window_len.saturating_sub(2)).max(min_lag);
        let fft_len = (2 * window_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        PitchTracker {
            sample_rate: sr,
            min_lag,
            max_lag,
            voicing_threshold,
            fft_len,
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    /// Normalized cross-correlation r(τ) for τ in `[min_lag-1, max_lag+1]`,
    /// indexed by τ (entries below `min_lag-1` are zero).
    pub fn nccf(&self, window: &[f64]) -> Vec<f64> {
        let n = window.len();
        let mean = window.iter().sum::<f64>() / n as f64;
        let x: Vec<f64> = window.iter().map(|v| v - mean).collect();

        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(self.fft_len, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for c in &mut buf {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;

        // prefix[i] = sum of x[..i]^2
        let mut prefix = vec![0.0; n + 1];
        for (i, v) in x.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v * v;
        }
        let total = prefix[n];
        let hi = (self.max_lag + 1).min(n - 1);
        let mut r = vec![0.0; hi + 1];
        for (lag, slot) in r.iter_mut().enumerate().skip(self.min_lag.saturating_sub(1)) {
            let head = prefix[n - lag];
            let tail = total - prefix[lag];
            let denom = (head * tail).sqrt();
            if denom > 1e-12 * (1.0 + total) && denom > 0.0 {
                *slot = buf[lag].re * scale / denom;
            }
        }
        r
    }

    pub fn estimate(&self, window: &[f64]) -> PitchEstimate {
        let r = self.nccf(window);
        let hi = self.max_lag.min(r.len().saturating_sub(2));
        let mut best: Option<(f64, f64, f64)> = None; // (score, lag, value)
        let mut max_r: f64 = 0.0;
        for lag in self.min_lag..=hi {
            max_r = max_r.max(r[lag]);
            let (prev, cur, next) = (r[lag - 1], r[lag], r[lag + 1]);
            if !(cur >= prev && cur > next) {
                continue;
            }
            let curvature = prev - 2.0 * cur + next;
            let shift = if curvature < 0.0 {
                (0.5 * (prev - next) / curvature).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let value = cur - 0.25 * (prev - next) * shift;
            let frac_lag = lag as f64 + shift;
            let score = value - OCTAVE_COST * (frac_lag / self.min_lag as f64).log2();
            if best.map_or(true, |(s, _, _)| score > s) {
                best = Some((score, frac_lag, value));
            }
        }
        match best {
            Some((_, lag, value)) => {
                let voicing_prob = value.clamp(0.0, 1.0);
                let f0 = if voicing_prob < self.voicing_threshold {
                    0.0
                } else {
                    self.sample_rate / lag
                };
                PitchEstimate {
                    f0,
                    voicing_prob,
                    peak: value,
                }
            }
            None => PitchEstimate {
                f0: 0.0,
                voicing_prob: max_r.clamp(0.0, 1.0),
                peak: max_r,
            },
        }
    }
}

/// Convenience wrapper around [`PitchTracker`] for a single window:
/// returns `(f0, voicing_prob)`.
pub fn f0_autocorr(window: &[f64], sample_rate_hz: u32, fmin: f64, fmax: f64) -> (f64, f64) {
    let est = PitchTracker::new(sample_rate_hz, window.len(), fmin, fmax, super::VOICING_THRESHOLD).estimate(window);
    (est.f0, est.voicing_prob)
}

pub fn hnr(window: &[f64], sample_rate_hz: u32, fmin: f64, fmax: f64) -> f64 {
    let est = PitchTracker::new(sample_rate_hz, window.len(), fmin, fmax, super::VOICING_THRESHOLD).estimate(window);
    hnr_from_r(est.peak)
}

/// Median over each voiced frame's voiced neighbours within `width` frames
/// (centered). Unvoiced frames stay at 0 and never enter a median.
pub fn smooth_f0(track: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = vec![0.0; track.len()];
    let mut buf = Vec::with_capacity(width);
    for (i, &v) in track.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        buf.clear();
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(track.len());
        buf.extend(track[lo..hi].iter().copied().filter(|&x| x > 0.0));
        buf.sort_by(f64::total_cmp);
        let m = buf.len();
        out[i] = if m % 2 == 1 {
            buf[m / 2]
        } else {
            0.5 * (buf[m / 2 - 1] + buf[m / 2])
        };
    }
    out
}
