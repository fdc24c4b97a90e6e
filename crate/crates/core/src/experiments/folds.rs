use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;

pub const N_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// Fails if any utterance sits in more than one partition.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (part, ids) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Experiment(format!("leakage: `{id}` appears again in {part}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub splits: Vec<Split>,
}

/// Shuffle once, cut ten test blocks of `k = N / 10`, and draw a dev set
/// of `k` from the rest of each split. Utterances beyond `10k` are never
/// tested and always train.
pub fn make_folds(c: &Corpus, seed: u64) -> Result<FoldPlan> {
    let n = c.len();
    if n < 2 * N_FOLDS {
        return Err(Error::Experiment(format!("{n} utterances is too few for {N_FOLDS}-fold splits")));
    }
    let mut ids = c.ids();
    ids.shuffle(&mut rng::stream(seed, "folds/shuffle", &[]));
    let k = n / N_FOLDS;
    let (pool, remainder) = ids.split_at(k * N_FOLDS);
    let splits = (0..N_FOLDS)
        .map(|i| {
            let test = pool[i * k..(i + 1) * k].to_vec();
            let rest: Vec<&String> = pool[..i * k].iter().chain(&pool[(i + 1) * k..]).collect();
            let mut r = rng::stream(seed, "folds/dev", &[i as u64]);
            let mut picked = index::sample(&mut r, rest.len(), k).into_vec();
            picked.sort_unstable();
            let chosen: HashSet<usize> = picked.iter().copied().collect();
            let dev = picked.iter().map(|&j| rest[j].clone()).collect();
            let train = rest
                .iter()
                .enumerate()
                .filter(|(j, _)| !chosen.contains(j))
                .map(|(_, id)| (*id).clone())
                .chain(remainder.iter().cloned())
                .collect();
            Split { train, dev, test }
        })
        .collect();
    Ok(FoldPlan { seed, splits })
}
