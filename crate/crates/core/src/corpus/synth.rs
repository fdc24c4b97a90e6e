//! Synthetic prosodic corpora.
//!
//! Each token is rendered as a five-harmonic tone at a speaker-specific base
//! F0. Accented tokens are raised in pitch, boosted in level and lengthened
//! by the amounts in [`SynthSpec`]. Labels are drawn so the accented share
//! of content and function words matches the spec exactly (up to rounding).

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{save_corpus, write_wav, Corpus, Token, Utterance};
use crate::error::{Error, Result};
use crate::featurizer::Waveform;
use crate::rng;

/// Frequent function words used by the generator, most common first.
pub const FUNCTION_WORDS: [&str; 50] = [
    "the", "of", "and", "a", "to", "in", "is", "it", "that", "was", "for", "on", "are", "with", "as", "his", "they",
    "at", "be", "this", "from", "have", "or", "by", "but", "not", "what", "all", "were", "we", "when", "your", "can",
    "there", "an", "which", "their", "if", "do", "will", "each", "about", "how", "up", "out", "them", "then", "she",
    "would", "so",
];

const N_HARMONICS: usize = 5;
const RAMP_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_utterances: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub sample_rate_hz: u32,
    pub n_speakers: usize,
    /// Base F0 of the lowest and highest speaker; others log-spaced between.
    pub speaker_f0_hz: (f64, f64),
    /// Standard deviation of the per-utterance register shift, semitones.
    pub utterance_f0_jitter_st: f64,
    /// Standard deviation of per-token F0 jitter, semitones.
    pub token_f0_jitter_st: f64,
    /// Standard deviation of per-token level jitter, dB.
    pub token_energy_jitter_db: f64,
    pub function_word_ratio: f64,
    pub p_content_accented: f64,
    pub p_function_accented: f64,
    pub accent_f0_st: f64,
    pub accent_energy_db: f64,
    /// Duration multiplier for accented tokens (1 = none).
    pub accent_lengthening: f64,
    pub content_duration_s: (f64, f64),
    pub function_duration_s: (f64, f64),
    pub gap_s: f64,
    pub edge_silence_s: f64,
    /// RMS level of an unaccented token before jitter.
    pub level_rms: f64,
    /// Amplitude of additive uniform noise over the whole utterance.
    pub noise_level: f64,
    /// Randomize harmonic weights per token (vowel-like timbre changes).
    pub timbre_variation: f64,
    pub n_function_words: usize,
    pub n_content_words: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_utterances: 60,
            min_tokens: 3,
            max_tokens: 8,
            sample_rate_hz: 16_000,
            n_speakers: 5,
            speaker_f0_hz: (100.0, 210.0),
            utterance_f0_jitter_st: 1.5,
            token_f0_jitter_st: 0.5,
            token_energy_jitter_db: 3.0,
            function_word_ratio: 0.4,
            p_content_accented: 0.9,
            p_function_accented: 0.1,
            accent_f0_st: 4.0,
            accent_energy_db: 1.0,
            accent_lengthening: 1.1,
            content_duration_s: (0.18, 0.32),
            function_duration_s: (0.10, 0.18),
            gap_s: 0.030,
            edge_silence_s: 0.050,
            level_rms: 0.15,
            noise_level: 0.002,
            timbre_variation: 0.5,
            n_function_words: 50,
            n_content_words: 600,
        }
    }
}

impl SynthSpec {
    /// Expected share of accented tokens.
    pub fn target_positive_rate(&self) -> f64 {
        self.p_content_accented * (1.0 - self.function_word_ratio) + self.p_function_accented * self.function_word_ratio
    }

    /// Accent carried by F0 alone: no level boost, no lengthening.
    pub fn pitch_only(mut self) -> Self {
        self.accent_energy_db = 0.0;
        self.accent_lengthening = 1.0;
        self
    }

    /// All acoustic accent cues switched off.
    pub fn without_accent_cues(mut self) -> Self {
        self.accent_f0_st = 0.0;
        self.accent_energy_db = 0.0;
        self.accent_lengthening = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSynthSpec(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if self.n_utterances == 0 {
            return bad("n_utterances must be positive");
        }
        if self.min_tokens == 0 || self.max_tokens < self.min_tokens {
            return bad("token count range must satisfy 1 <= min_tokens <= max_tokens");
        }
        if self.sample_rate_hz < 8000 {
            return bad("sample rate must be at least 8000 Hz");
        }
        if self.n_speakers == 0 {
            return bad("n_speakers must be positive");
        }
        let (f_lo, f_hi) = self.speaker_f0_hz;
        if !range_ok(self.speaker_f0_hz) || f_lo < 50.0 || f_hi > 500.0 {
            return bad("speaker F0 range must lie within [50, 500] Hz");
        }
        if !(prob(self.function_word_ratio) && prob(self.p_content_accented) && prob(self.p_function_accented)) {
            return bad("ratios and accent probabilities must lie in [0, 1]");
        }
        if !range_ok(self.content_duration_s) || !range_ok(self.function_duration_s) {
            return bad("duration ranges must be positive and ordered");
        }
        if self.accent_lengthening <= 0.0 || self.gap_s < 0.0 || self.edge_silence_s < 0.0 {
            return bad("lengthening must be positive and silences non-negative");
        }
        for v in [
            self.utterance_f0_jitter_st,
            self.token_f0_jitter_st,
            self.token_energy_jitter_db,
            self.noise_level,
            self.timbre_variation,
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("jitter, noise and timbre amounts must be non-negative");
            }
        }
        if !(self.level_rms > 0.0 && self.level_rms < 0.5) {
            return bad("level_rms must lie in (0, 0.5)");
        }
        if self.timbre_variation >= 1.0 {
            return bad("timbre_variation must be below 1");
        }
        if self.n_function_words == 0 || self.n_function_words > FUNCTION_WORDS.len() {
            return bad("n_function_words must lie in [1, 50]");
        }
        if self.n_content_words == 0 {
            return bad("n_content_words must be positive");
        }
        Ok(())
    }
}

/// Generated corpus with in-memory audio and the F0 each token was rendered at.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub waveforms: Vec<Waveform>,
    pub token_f0_hz: Vec<Vec<f64>>,
    pub speaker_f0_hz: Vec<(String, f64)>,
}

/// Deterministic pseudo-word for content slot `i` (never a stopword).
pub fn content_word(i: usize) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "v"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut n = i;
    let mut w = String::new();
    for _ in 0..3 {
        w.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        w.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
    }
    w.push('k');
    if n > 0 {
        w.push_str(&n.to_string());
    }
    w
}

struct TokenPlan {
    text: String,
    content: bool,
    label: u8,
}

pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut plan_rng = rng::stream(seed, "synth/plan", &[]);

    let counts: Vec<usize> = (0..spec.n_utterances)
        .map(|_| plan_rng.gen_range(spec.min_tokens..=spec.max_tokens))
        .collect();
    let total: usize = counts.iter().sum();

    let n_function = (spec.function_word_ratio * total as f64).round() as usize;
    let mut is_content: Vec<bool> = (0..total).map(|i| i >= n_function).collect();
    is_content.shuffle(&mut plan_rng);

    let n_content = total - n_function;
    let acc_content = (spec.p_content_accented * n_content as f64).round() as usize;
    let acc_function = (spec.p_function_accented * n_function as f64).round() as usize;
    let mut content_labels: Vec<u8> = (0..n_content).map(|i| u8::from(i < acc_content)).collect();
    let mut function_labels: Vec<u8> = (0..n_function).map(|i| u8::from(i < acc_function)).collect();
    content_labels.shuffle(&mut plan_rng);
    function_labels.shuffle(&mut plan_rng);

    let mut ci = content_labels.into_iter();
    let mut fi = function_labels.into_iter();
    let mut plans: Vec<Vec<TokenPlan>> = Vec::with_capacity(spec.n_utterances);
    let mut flat = is_content.into_iter();
    for &c in &counts {
        let mut toks = Vec::with_capacity(c);
        for _ in 0..c {
            let content = flat.next().expect("planned token count");
            let (text, label) = if content {
                (
                    content_word(plan_rng.gen_range(0..spec.n_content_words)),
                    ci.next().expect("content label"),
                )
            } else {
                (
                    FUNCTION_WORDS[plan_rng.gen_range(0..spec.n_function_words)].to_string(),
                    fi.next().expect("function label"),
                )
            };
            toks.push(TokenPlan { text, content, label });
        }
        plans.push(toks);
    }

    let speakers: Vec<(String, f64)> = (0..spec.n_speakers)
        .map(|i| {
            let (lo, hi) = spec.speaker_f0_hz;
            let frac = if spec.n_speakers == 1 {
                0.0
            } else {
                i as f64 / (spec.n_speakers - 1) as f64
            };
            (format!("spk{}", i + 1), lo * (hi / lo).powf(frac))
        })
        .collect();

    let rendered: Vec<(Utterance, Waveform, Vec<f64>)> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let (speaker, base) = &speakers[i % speakers.len()];
            render_utterance(spec, seed, i, speaker, *base, plan)
        })
        .collect::<Result<_>>()?;

    let mut utterances = Vec::with_capacity(rendered.len());
    let mut waveforms = Vec::with_capacity(rendered.len());
    let mut token_f0_hz = Vec::with_capacity(rendered.len());
    for (u, w, f) in rendered {
        utterances.push(u);
        waveforms.push(w);
        token_f0_hz.push(f);
    }
    Ok(SynthCorpus {
        corpus: Corpus::new(utterances, spec.sample_rate_hz)?,
        waveforms,
        token_f0_hz,
        speaker_f0_hz: speakers,
    })
}

fn standard_normal(r: &mut rng::Rng) -> f64 {
    r.sample(rand_distr::StandardNormal)
}

fn render_utterance(
    spec: &SynthSpec,
    seed: u64,
    index: usize,
    speaker: &str,
    base_f0: f64,
    plan: &[TokenPlan],
) -> Result<(Utterance, Waveform, Vec<f64>)> {
    let mut r = rng::stream(seed, "synth/render", &[index as u64]);
    let sr = f64::from(spec.sample_rate_hz);
    let register = spec.utterance_f0_jitter_st * standard_normal(&mut r);

    struct Segment {
        start: usize,
        len: usize,
        f0: f64,
        rms: f64,
        weights: [f64; N_HARMONICS],
    }

    let mut cursor = (spec.edge_silence_s * sr).round() as usize;
    let mut segments = Vec::with_capacity(plan.len());
    let mut tokens = Vec::with_capacity(plan.len());
    let mut f0s = Vec::with_capacity(plan.len());
    for tp in plan {
        let accented = tp.label == 1;
        let (lo, hi) = if tp.content {
            spec.content_duration_s
        } else {
            spec.function_duration_s
        };
        let mut dur = if hi > lo { r.gen_range(lo..hi) } else { lo };
        let mut semitones = register + spec.token_f0_jitter_st * standard_normal(&mut r);
        let mut level_db = spec.token_energy_jitter_db * standard_normal(&mut r);
        if accented {
            dur *= spec.accent_lengthening;
            semitones += spec.accent_f0_st;
            level_db += spec.accent_energy_db;
        }
        let f0 = (base_f0 * 2f64.powf(semitones / 12.0)).clamp(55.0, 480.0);
        let mut weights = [0.0; N_HARMONICS];
        for (k, w) in weights.iter_mut().enumerate() {
            let jitter = if spec.timbre_variation > 0.0 {
                r.gen_range(1.0 - spec.timbre_variation..=1.0 + spec.timbre_variation)
            } else {
                1.0
            };
            *w = jitter / (k + 1) as f64;
        }
        let len = ((dur * sr).round() as usize).max(1);
        segments.push(Segment {
            start: cursor,
            len,
            f0,
            rms: spec.level_rms * 10f64.powf(level_db / 20.0),
            weights,
        });
        tokens.push(Token::new(
            tp.text.clone(),
            cursor as f64 / sr,
            (cursor + len) as f64 / sr,
            tp.label,
        ));
        f0s.push(f0);
        cursor += len + (spec.gap_s * sr).round() as usize;
    }
    let total = cursor - (spec.gap_s * sr).round() as usize + (spec.edge_silence_s * sr).round() as usize;
    let mut samples = vec![0.0f64; total.max(1)];

    let ramp = ((RAMP_S * sr).round() as usize).max(1);
    for seg in &segments {
        let nyquist = sr / 2.0;
        let power: f64 = seg
            .weights
            .iter()
            .enumerate()
            .filter(|(k, _)| (*k + 1) as f64 * seg.f0 < nyquist)
            .map(|(_, w)| w * w / 2.0)
            .sum();
        let gain = seg.rms / power.sqrt();
        let r_len = ramp.min(seg.len / 2).max(1);
        for i in 0..seg.len {
            let t = i as f64 / sr;
            let mut v = 0.0;
            for (k, w) in seg.weights.iter().enumerate() {
                let f = (k + 1) as f64 * seg.f0;
                if f < nyquist {
                    v += w * (2.0 * PI * f * t).sin();
                }
            }
            let env = if i < r_len {
                0.5 - 0.5 * (PI * i as f64 / r_len as f64).cos()
            } else if i >= seg.len - r_len {
                0.5 - 0.5 * (PI * (seg.len - 1 - i) as f64 / r_len as f64).cos()
            } else {
                1.0
            };
            samples[seg.start + i] = gain * env * v;
        }
    }
    if spec.noise_level > 0.0 {
        let mut nr = rng::stream(seed, "synth/noise", &[index as u64]);
        for s in &mut samples {
            *s += nr.gen_range(-spec.noise_level..=spec.noise_level);
        }
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }

    let id = format!("utt{index:05}");
    let utt = Utterance {
        audio_ref: Some(PathBuf::from(format!("wav/{id}.wav"))),
        id,
        speaker: speaker.to_string(),
        tokens,
    };
    Ok((utt, Waveform::new(samples, spec.sample_rate_hz)?, f0s))
}

/// Write `corpus.jsonl` plus `wav/<id>.wav` under `dir`; returns the
/// corpus path.
pub fn write_synth_corpus(synth: &SynthCorpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let wav_dir = dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    for (u, w) in synth.corpus.utterances.iter().zip(&synth.waveforms) {
        let rel = u.audio_ref.as_ref().expect("synthetic utterances reference audio");
        write_wav(dir.join(rel), w)?;
    }
    let path = dir.join("corpus.jsonl");
    save_corpus(&synth.corpus, &path)?;
    Ok(path)
}
