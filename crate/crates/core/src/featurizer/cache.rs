//! On-disk feature cache: one file per utterance holding a little-endian
//! `u32` shape header `(n, 6)` followed by row-major `f32` values.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{FeatureMatrix, FeatureParams, FEATURIZER_VERSION, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(FeatureCache { dir })
    }

    /// Key over featurizer version, parameters, utterance id and audio path.
    pub fn key(params: &FeatureParams, utterance_id: &str, audio: &Path) -> String {
        let mut h = Sha256::new();
        h.update(FEATURIZER_VERSION.to_le_bytes());
        h.update(serde_json::to_vec(params).expect("params serialize"));
        h.update(utterance_id.as_bytes());
        h.update([0]);
        h.update(audio.to_string_lossy().as_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.feat"))
    }

    pub fn get(&self, key: &str) -> Result<Option<FeatureMatrix>> {
        let p = self.path_for(key);
        if !p.exists() {
            return Ok(None);
        }
        read_matrix(&p).map(Some)
    }

    pub fn put(&self, key: &str, fm: &FeatureMatrix) -> Result<()> {
        write_matrix(&self.path_for(key), fm)
    }
}

pub fn encode_matrix(fm: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 4 * fm.as_slice().len());
    buf.extend((fm.n_frames() as u32).to_le_bytes());
    buf.extend((N_FEATURES as u32).to_le_bytes());
    for v in fm.as_slice() {
        buf.extend(v.to_le_bytes());
    }
    buf
}

pub fn decode_matrix(bytes: &[u8], hop_s: f64) -> Result<FeatureMatrix> {
    let bad = |m: &str| Error::Features(format!("feature cache: {m}"));
    if bytes.len() < 8 {
        return Err(bad("truncated header"));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if d != N_FEATURES {
        return Err(bad(&format!("expected {N_FEATURES} columns, found {d}")));
    }
    let body = &bytes[8..];
    if body.len() != n * d * 4 {
        return Err(bad("payload length does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::from_rows(data, hop_s)
}

fn write_matrix(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    fs::write(path, encode_matrix(fm)).map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, FeatureParams::default().hop_s)
}
