use std::fs;
use std::path::{Path, PathBuf};

use accent_core::baselines::BaselineKind;
use accent_core::corpus::SynthSpec;
use accent_core::experiments::{HparamSpace, Protocol, DEFAULT_VOCAB_SIZES};
use accent_core::featurizer::{Ablation, FeatureParams};
use accent_core::model::ModelConfig;
use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Written verbatim to `config.toml` in the
/// output directory; running again with `--config` on that file reproduces
/// the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Data seed: synthetic corpus and fold shuffling.
    pub seed: u64,
    /// Not archived: the archive already sits in this directory, and
    /// leaving it out keeps archives of identical runs identical.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub ablation: Ablation,
    pub corpus: CorpusSection,
    pub synth: SynthSpec,
    pub features: FeatureParams,
    pub model: ModelConfig,
    pub protocol: Protocol,
    pub suite: SuiteSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            threads: None,
            ablation: Ablation::None,
            corpus: CorpusSection::default(),
            synth: SynthSpec::default(),
            features: FeatureParams::default(),
            model: ModelConfig::default(),
            protocol: Protocol::default(),
            suite: SuiteSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    /// Replaces the shipped stopword list.
    pub stopwords: Option<PathBuf>,
    /// Word vectors (`word v1 … vD` per line) to seed the text embedding.
    pub embeddings: Option<PathBuf>,
    /// Feature cache directory; defaults to `<out>/features`.
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub train_fold: usize,
    pub baseline: BaselineKind,
    pub vocab_sizes: Vec<usize>,
    pub hparam_budget: usize,
    pub hparam_protocol: Protocol,
    pub hparam_space: HparamSpace,
    pub sweep_widths: Vec<usize>,
    pub sweep_depths: Vec<usize>,
}

impl Default for SuiteSection {
    fn default() -> Self {
        SuiteSection {
            train_fold: 0,
            baseline: BaselineKind::ContentWord,
            vocab_sizes: DEFAULT_VOCAB_SIZES.to_vec(),
            hparam_budget: 96,
            hparam_protocol: Protocol {
                seeds: vec![1],
                folds: 3,
            },
            hparam_space: HparamSpace::default(),
            sweep_widths: (9..=23).step_by(2).collect(),
            sweep_depths: vec![1, 2, 3, 4, 5, 6],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.ablation.validate()?;
        self.protocol.validate()?;
        self.suite.hparam_protocol.validate()?;
        self.synth.validate()?;
        if self.threads == Some(0) {
            anyhow::bail!("threads must be at least 1");
        }
        Ok(())
    }

    /// Write the effective configuration next to the reports.
    pub fn archive(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("config.toml");
        fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .path
            .as_deref()
            .context("no corpus given (use --corpus or [corpus] path)")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.corpus.cache.clone().unwrap_or_else(|| self.out.join("features"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let moved: ExperimentConfig = toml::from_str("out = \"elsewhere\"").unwrap();
        assert_eq!(moved.out, PathBuf::from("elsewhere"));
        assert!(!moved.to_toml().unwrap().contains("elsewhere"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("sed = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[model]\ncnn_layer = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[suite]\nbudget = 3").is_err());
        let c: ExperimentConfig = toml::from_str("seed = 3\n[model]\ncnn_kernel_width = 9").unwrap();
        assert_eq!((c.seed, c.model.cnn_kernel_width), (3, 9));
    }

    #[test]
    fn ablation_forms() {
        let c: ExperimentConfig = toml::from_str("ablation = \"duration_only\"").unwrap();
        assert_eq!(c.ablation, Ablation::DurationOnly);
        let c: ExperimentConfig = toml::from_str("[ablation]\ndrop_groups = [\"pitch\"]").unwrap();
        assert_eq!(c.ablation.label(), "intensity+voicing");
    }
}
