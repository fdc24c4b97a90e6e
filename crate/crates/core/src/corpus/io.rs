use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::featurizer::Waveform;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One JSON object per utterance per line.
    #[default]
    Jsonl,
}

/// Load a JSONL corpus. Relative audio references resolve against the
/// corpus file's directory. The sample rate is read from the first
/// referenced waveform that exists, defaulting to 16 kHz.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let CorpusFormat::Jsonl = format;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut utterances = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let u: Utterance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        utterances.push(u);
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut corpus = Corpus {
        utterances,
        sample_rate_hz: DEFAULT_SAMPLE_RATE,
        audio_root: Some(root),
    };
    corpus.validate()?;
    if let Some(wav) = corpus
        .utterances
        .iter()
        .filter_map(|u| corpus.audio_path(u))
        .find(|p| p.exists())
    {
        let reader = hound::WavReader::open(&wav).map_err(|e| Error::Audio(format!("{}: {e}", wav.display())))?;
        corpus.sample_rate_hz = reader.spec().sample_rate;
    }
    Ok(corpus)
}

/// Write the canonical JSONL form: fixed key order, shortest round-trip
/// float formatting, `\n` line endings.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for u in &corpus.utterances {
        let line = serde_json::to_string(u).expect("utterances always serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// 16-bit PCM mono.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let audio_err = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(audio_err)?;
    for &s in &wave.samples {
        let q = (s.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16;
        w.write_sample(q).map_err(audio_err)?;
    }
    w.finalize().map_err(audio_err)
}

/// Read a mono WAV (integer PCM or float). Multi-channel files are mixed down.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let audio_err = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut r = hound::WavReader::open(path).map_err(audio_err)?;
    let spec = r.spec();
    let raw: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = f64::from(1u32 << (spec.bits_per_sample - 1));
            r.samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(audio_err)?
        }
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(audio_err)?,
    };
    let ch = usize::from(spec.channels.max(1));
    let samples = raw
        .chunks(ch)
        .map(|c| c.iter().sum::<f64>() / ch as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}
