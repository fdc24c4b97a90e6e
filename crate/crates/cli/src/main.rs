//! `accent`: pitch accent experiments from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use accent_core::baselines::BaselineKind;
use accent_core::featurizer::{Ablation, FeatureGroup};
use accent_core::model::{Context, InputMode};
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "accent", version, about = "Pitch accent detection from speech and text")]
#[command(long_about = "Pitch accent detection from speech and text.

Settings come from a TOML config (--config) and are overridden by flags.
The effective config is written to <out>/config.toml; pass that file back
with --config to reproduce a run.")]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Data seed (synthesis and fold shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports, checkpoints and the archived config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel runs and feature extraction.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Corpus file (JSONL, one utterance per line).
    #[arg(long)]
    corpus: Option<PathBuf>,

    /// Feature cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Input features: speech, text or speech-text.
    #[arg(long)]
    mode: Option<InputMode>,

    /// Context: full-utterance, three-token or one-token.
    #[arg(long)]
    context: Option<Context>,

    /// CNN only (no BiLSTM).
    #[arg(long)]
    no_lstm: bool,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Drop feature groups (comma-separated: pitch, intensity, voicing).
    #[arg(long, value_delimiter = ',')]
    drop: Vec<FeatureGroup>,

    /// Replace every feature with 1 (duration-only baseline).
    #[arg(long, conflicts_with = "drop")]
    duration_only: bool,
}

#[derive(Args, Debug, Default)]
struct ProtocolArgs {
    /// Number of the ten cross-validation splits to run.
    #[arg(long)]
    folds: Option<usize>,

    /// Model seeds (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus (corpus.jsonl and wav/) in the output directory.
    Synth {
        /// Number of utterances.
        #[arg(long)]
        utterances: Option<usize>,
    },
    /// Extract and cache frame features for every utterance.
    Featurize {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train one model on one split and save its checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Which of the ten splits to train on.
        #[arg(long)]
        fold: Option<usize>,
        /// Model seed.
        #[arg(long)]
        model_seed: Option<u64>,
    },
    /// Cross-validate over folds and seeds.
    Crossval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        protocol: ProtocolArgs,
    },
    /// Hold out each speaker in turn.
    SpeakerIndep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Feature-group ablations under two contexts and two architectures.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        protocol: ProtocolArgs,
    },
    /// Text-only accuracy as the vocabulary shrinks.
    VocabShrink {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// Vocabulary sizes (comma-separated).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
    /// Random hyperparameter search.
    Hparam {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Number of distinct configurations to try.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Accuracy against CNN filter width and depth.
    CnnSweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long, value_delimiter = ',')]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        depths: Vec<usize>,
    },
    /// Score a reference predictor: majority, content-word or duration-only.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        kind: Option<BaselineKind>,
        #[command(flatten)]
        protocol: ProtocolArgs,
    },
    /// Evaluate a saved checkpoint on a corpus.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Score one part of this split (folds come from --seed) instead of the whole corpus.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, value_enum, default_value_t = commands::Part::Test, requires = "fold")]
        part: commands::Part,
    },
}

impl DataArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(p) = &self.corpus {
            c.corpus.path = Some(p.clone());
        }
        if let Some(p) = &self.cache {
            c.corpus.cache = Some(p.clone());
        }
    }
}

impl ModelArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        let m = &mut c.model;
        if let Some(mode) = self.mode {
            m.input_mode = mode;
        }
        if let Some(ctx) = self.context {
            m.context = ctx;
            if ctx == Context::OneToken {
                m.use_lstm = false;
            }
        }
        if self.no_lstm {
            m.use_lstm = false;
        }
        if let Some(e) = self.epochs {
            m.epochs = e;
        }
        if let Some(b) = self.batch_size {
            m.batch_size = b;
        }
        if self.duration_only {
            c.ablation = Ablation::DurationOnly;
        } else if !self.drop.is_empty() {
            c.ablation = Ablation::drop(&self.drop);
        }
    }
}

impl ProtocolArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(f) = self.folds {
            c.protocol.folds = f;
        }
        if !self.seeds.is_empty() {
            c.protocol.seeds = self.seeds.clone();
        }
    }
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    if let Some(t) = cli.threads {
        c.threads = Some(t);
    }
    match &cli.command {
        Command::Synth { utterances } => {
            if let Some(n) = utterances {
                c.synth.n_utterances = *n;
            }
        }
        Command::Featurize { data } | Command::Eval { data, .. } => data.apply(&mut c),
        Command::Train {
            data,
            model,
            fold,
            model_seed,
        } => {
            data.apply(&mut c);
            model.apply(&mut c);
            if let Some(f) = fold {
                c.suite.train_fold = *f;
            }
            if let Some(s) = model_seed {
                c.protocol.seeds = vec![*s];
            }
        }
        Command::Crossval { data, model, protocol } | Command::Ablate { data, model, protocol } => {
            data.apply(&mut c);
            model.apply(&mut c);
            protocol.apply(&mut c);
        }
        Command::SpeakerIndep { data, model } => {
            data.apply(&mut c);
            model.apply(&mut c);
        }
        Command::VocabShrink {
            data,
            model,
            protocol,
            sizes,
        } => {
            data.apply(&mut c);
            model.apply(&mut c);
            protocol.apply(&mut c);
            if !sizes.is_empty() {
                c.suite.vocab_sizes = sizes.clone();
            }
        }
        Command::Hparam { data, model, budget } => {
            data.apply(&mut c);
            model.apply(&mut c);
            if let Some(b) = budget {
                c.suite.hparam_budget = *b;
            }
        }
        Command::CnnSweep {
            data,
            model,
            protocol,
            widths,
            depths,
        } => {
            data.apply(&mut c);
            model.apply(&mut c);
            protocol.apply(&mut c);
            if !widths.is_empty() {
                c.suite.sweep_widths = widths.clone();
            }
            if !depths.is_empty() {
                c.suite.sweep_depths = depths.clone();
            }
        }
        Command::Baseline { data, kind, protocol } => {
            data.apply(&mut c);
            protocol.apply(&mut c);
            if let Some(k) = kind {
                c.suite.baseline = *k;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Featurize { .. } => commands::featurize(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Crossval { .. } => commands::crossval(&cfg),
        Command::SpeakerIndep { .. } => commands::speaker_indep(&cfg),
        Command::Ablate { .. } => commands::ablate(&cfg),
        Command::VocabShrink { .. } => commands::vocab_shrink(&cfg),
        Command::Hparam { .. } => commands::hparam(&cfg),
        Command::CnnSweep { .. } => commands::cnn_sweep_cmd(&cfg),
        Command::Baseline { .. } => commands::baseline(&cfg),
        Command::Eval {
            checkpoint, fold, part, ..
        } => commands::eval(&cfg, checkpoint, *fold, *part),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
