use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RunReport;

/// One epoch of one run in `crossval.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalRow {
    pub fold: usize,
    pub seed: u64,
    pub epoch: usize,
    pub dev_acc: f64,
    pub test_acc: f64,
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_crossval_csv(path: impl AsRef<Path>, report: &RunReport) -> Result<()> {
    let rows: Vec<CrossvalRow> = report
        .runs
        .iter()
        .flat_map(|r| {
            r.epochs.iter().map(move |e| CrossvalRow {
                fold: r.fold,
                seed: r.seed,
                epoch: e.epoch,
                dev_acc: e.dev_acc,
                test_acc: e.test_acc,
            })
        })
        .collect();
    write_csv(path, &rows)
}

pub fn read_crossval_csv(path: impl AsRef<Path>) -> Result<Vec<CrossvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Experiment(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
