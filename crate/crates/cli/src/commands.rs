use std::path::Path;

use accent_core::baselines::{
    accuracy, class_report, content_word_predict, evaluate_corpus, majority_predict, BaselineKind, ClassReport,
};
use accent_core::corpus::{load_corpus, synth_corpus, write_synth_corpus, Corpus, CorpusFormat, StopwordList};
use accent_core::experiments::{
    ablation_suite, cnn_sweep, default_ablations, evaluate, examples_with_meta, hparam_search, make_folds,
    run_crossval, speaker_independent, train_run_with_model, vocab_shrink_suite, write_crossval_csv, write_csv,
    write_json, Dataset, FoldPlan, RunReport, Stats,
};
use accent_core::featurizer::{Ablation, FeatureCache};
use accent_core::model::{AccentModel, InputMode};
use anyhow::{bail, Context as _, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

fn stopwords(cfg: &ExperimentConfig) -> Result<StopwordList> {
    match &cfg.corpus.stopwords {
        Some(p) => StopwordList::load(p).with_context(|| format!("loading stopwords {}", p.display())),
        None => Ok(StopwordList::english()),
    }
}

/// The configured corpus, or the `[synth]` corpus generated in memory from
/// `seed` when no path is given.
fn load_text(cfg: &ExperimentConfig) -> Result<Corpus> {
    match &cfg.corpus.path {
        Some(p) => load_corpus(p, CorpusFormat::Jsonl).with_context(|| format!("loading corpus {}", p.display())),
        None => {
            log::info!("no corpus path; generating the [synth] corpus with seed {}", cfg.seed);
            Ok(synth_corpus(&cfg.synth, cfg.seed).context("synthesizing corpus")?.corpus)
        }
    }
}

fn load_data(cfg: &ExperimentConfig, speech: bool) -> Result<Dataset> {
    let data = if !speech {
        Dataset::text_only(load_text(cfg)?)?
    } else if cfg.corpus.path.is_none() {
        let s = synth_corpus(&cfg.synth, cfg.seed).context("synthesizing corpus")?;
        Dataset::from_synth(&s, &cfg.features).context("extracting features")?
    } else {
        let corpus = load_text(cfg)?;
        let cache = FeatureCache::new(cfg.cache_dir()).context("opening feature cache")?;
        Dataset::featurize(corpus, &cfg.features, Some(&cache)).context("extracting features")?
    };
    Ok(match &cfg.corpus.embeddings {
        Some(p) => data.with_embeddings(p),
        None => data,
    })
}

fn fold_plan(cfg: &ExperimentConfig, data: &Dataset) -> Result<FoldPlan> {
    make_folds(data.corpus(), cfg.seed).context("building folds")
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.protocol.seeds[0]
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a str,
    runs: usize,
    failed: usize,
    dev: Stats,
    test: Stats,
    repairs: usize,
}

impl<'a> Summary<'a> {
    fn new(label: &'a str, r: &RunReport) -> Self {
        Summary {
            config: label,
            runs: r.runs.len(),
            failed: r.failed.len(),
            dev: r.dev,
            test: r.test,
            repairs: r.repairs,
        }
    }
}

fn print_report(r: &ClassReport) {
    println!("accuracy {:.4} ({} tokens)", r.accuracy, r.n_tokens);
    for (label, c) in r.classes.iter().enumerate() {
        println!(
            "class {label}: precision {:.4} recall {:.4} f1 {:.4} support {}",
            c.precision, c.recall, c.f1, c.support
        );
    }
}

pub fn synth(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let s = synth_corpus(&cfg.synth, cfg.seed).context("synthesizing corpus")?;
    let path = write_synth_corpus(&s, &cfg.out).context("writing corpus")?;
    println!(
        "{} utterances, {} tokens ({} accented) -> {}",
        s.corpus.len(),
        s.corpus.n_tokens(),
        s.corpus.n_accented(),
        path.display()
    );
    Ok(())
}

pub fn featurize(cfg: &ExperimentConfig) -> Result<()> {
    cfg.corpus_path()?;
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, true)?;
    println!("{} utterances featurized; cache {}", data.len(), cfg.cache_dir().display());
    Ok(())
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, cfg.model.input_mode.uses_speech())?;
    let plan = fold_plan(cfg, &data)?;
    let split = plan
        .splits
        .get(cfg.suite.train_fold)
        .with_context(|| format!("fold {} out of range", cfg.suite.train_fold))?;
    let seed = first_seed(cfg);
    let (record, model, meta) =
        train_run_with_model(&data, &cfg.model, &cfg.ablation, split, cfg.suite.train_fold, seed).context("training")?;
    let ckpt = cfg.out.join("model.ckpt");
    model.save(&ckpt, &meta).context("saving checkpoint")?;
    let report = RunReport::from_runs(vec![record.clone()], vec![]);
    write_crossval_csv(cfg.out.join("crossval.csv"), &report)?;
    write_json(cfg.out.join("summary.json"), &Summary::new(&cfg.ablation.label(), &report))?;
    println!(
        "fold {} seed {seed}: epoch {} dev {:.4} test {:.4} ({} parameters) -> {}",
        cfg.suite.train_fold,
        record.selected_epoch,
        record.dev_acc,
        record.test_acc,
        record.n_params,
        ckpt.display()
    );
    Ok(())
}

pub fn crossval(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, cfg.model.input_mode.uses_speech())?;
    let plan = fold_plan(cfg, &data)?;
    let report = run_crossval(&data, &cfg.model, &cfg.ablation, &plan, &cfg.protocol).context("cross-validation")?;
    write_crossval_csv(cfg.out.join("crossval.csv"), &report)?;
    write_json(cfg.out.join("summary.json"), &Summary::new(&cfg.ablation.label(), &report))?;
    println!(
        "{} runs ({} diverged): dev {:.4} ± {:.4}, test {:.4} ± {:.4}",
        report.runs.len(),
        report.failed.len(),
        report.dev.mean,
        report.dev.std,
        report.test.mean,
        report.test.std
    );
    Ok(())
}

pub fn speaker_indep(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, cfg.model.input_mode.uses_speech())?;
    let rows = speaker_independent(&data, &cfg.model, &cfg.ablation, cfg.seed, first_seed(cfg))
        .context("speaker-independent runs")?;
    write_csv(cfg.out.join("speaker.csv"), &rows)?;
    for r in &rows {
        println!("{}: test {:.4} ({} utterances)", r.speaker, r.test_acc, r.n_test_utterances);
    }
    Ok(())
}

pub fn ablate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.model.input_mode == InputMode::Text {
        bail!("ablations need a speech or speech-text model");
    }
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, true)?;
    let plan = fold_plan(cfg, &data)?;
    let (rows, _) = ablation_suite(&data, &cfg.model, &default_ablations(), &plan, &cfg.protocol)
        .context("ablation suite")?;
    write_csv(cfg.out.join("ablation.csv"), &rows)?;
    for r in &rows {
        println!(
            "{:<26} {:<15} {:<8} test {:.4} ± {:.4}",
            r.ablation,
            r.context.to_string(),
            r.architecture,
            r.mean_test,
            r.std_test
        );
    }
    Ok(())
}

pub fn vocab_shrink(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, false)?;
    let plan = fold_plan(cfg, &data)?;
    let rows = vocab_shrink_suite(&data, &cfg.model, &cfg.suite.vocab_sizes, &plan, &cfg.protocol)
        .context("vocabulary suite")?;
    write_csv(cfg.out.join("vocab.csv"), &rows)?;
    for r in &rows {
        println!("vocab {:>5}: test {:.4} ± {:.4}", r.vocab_size, r.mean_test, r.std_test);
    }
    Ok(())
}

pub fn hparam(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, cfg.model.input_mode.uses_speech())?;
    let plan = fold_plan(cfg, &data)?;
    let report = hparam_search(
        &data,
        &cfg.model,
        &cfg.suite.hparam_space,
        cfg.suite.hparam_budget,
        cfg.seed,
        &plan,
        &cfg.suite.hparam_protocol,
    )
    .context("hyperparameter search")?;
    write_csv(cfg.out.join("hparam.csv"), &report.trials)?;
    write_json(cfg.out.join("hparam.json"), &report)?;
    let best = &report.trials[report.best];
    println!(
        "{} configurations: dev {:.4} (variance {:.5}); best trial {} dev {:.4}",
        report.trials.len(),
        report.dev_across_configs.mean,
        report.dev_across_configs.variance,
        best.trial,
        best.mean_dev
    );
    Ok(())
}

pub fn cnn_sweep_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.archive(&cfg.out)?;
    let data = load_data(cfg, true)?;
    let plan = fold_plan(cfg, &data)?;
    let rows = cnn_sweep(
        &data,
        &cfg.model,
        &cfg.suite.sweep_widths,
        &cfg.suite.sweep_depths,
        &plan,
        &cfg.protocol,
    )
    .context("CNN sweep")?;
    write_csv(cfg.out.join("cnn_sweep.csv"), &rows)?;
    for r in &rows {
        println!("{} {:>2}: test {:.4} (span repairs {})", r.sweep, r.value, r.mean_test, r.repairs);
    }
    Ok(())
}

#[derive(Serialize)]
struct BaselineSummary {
    kind: BaselineKind,
    corpus: ClassReport,
    /// Mean test accuracy over the cross-validation splits, when the corpus
    /// is large enough to split.
    fold_mean: Option<f64>,
}

pub fn baseline(cfg: &ExperimentConfig) -> Result<()> {
    let kind = cfg.suite.baseline;
    if kind == BaselineKind::DurationOnly {
        let mut c = cfg.clone();
        c.model.input_mode = InputMode::Speech;
        c.ablation = Ablation::DurationOnly;
        return crossval(&c);
    }
    cfg.archive(&cfg.out)?;
    let data = Dataset::text_only(load_text(cfg)?)?;
    let sw = stopwords(cfg)?;
    let corpus = data.corpus();
    let majority = majority_predict(corpus);
    let report = match kind {
        BaselineKind::Majority => evaluate_corpus(corpus, |u| vec![majority; u.len()]),
        _ => evaluate_corpus(corpus, |u| content_word_predict(u, &sw)),
    }?;
    let fold_mean = match make_folds(corpus, cfg.seed) {
        Ok(plan) => {
            let mut accs = Vec::new();
            for split in plan.splits.iter().take(cfg.protocol.folds) {
                let train = corpus.subset(&split.train)?;
                let test = corpus.subset(&split.test)?;
                let label = majority_predict(&train);
                let (mut pred, mut gold) = (Vec::new(), Vec::new());
                for u in &test.utterances {
                    match kind {
                        BaselineKind::Majority => pred.extend(vec![label; u.len()]),
                        _ => pred.extend(content_word_predict(u, &sw)),
                    }
                    gold.extend(u.labels());
                }
                accs.push(accuracy(&pred, &gold)?);
            }
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        }
        Err(e) => {
            log::info!("no fold-level score: {e}");
            None
        }
    };
    if kind == BaselineKind::Majority {
        println!("majority label {majority}");
    }
    print_report(&report);
    if let Some(m) = fold_mean {
        println!("fold mean test accuracy {m:.4}");
    }
    write_json(
        cfg.out.join("baseline.json"),
        &BaselineSummary {
            kind,
            corpus: report,
            fold_mean,
        },
    )?;
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, fold: Option<usize>, part: Part) -> Result<()> {
    let (model, meta) = AccentModel::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let data = load_data(cfg, meta.config.input_mode.uses_speech())?;
    let ids = match fold {
        None => data.ids(),
        Some(f) => {
            let plan = fold_plan(cfg, &data)?;
            let split = plan.splits.get(f).with_context(|| format!("fold {f} out of range"))?;
            match part {
                Part::Train => split.train.clone(),
                Part::Dev => split.dev.clone(),
                Part::Test => split.test.clone(),
            }
        }
    };
    let examples = examples_with_meta(&data, &ids, &meta).context("preparing inputs")?;
    let (_, pred) = evaluate(&model, &examples).context("predicting")?;
    let gold: Vec<u8> = examples.iter().flat_map(|e| e.scored_labels()).map(|l| l as u8).collect();
    print_report(&class_report(&pred, &gold)?);
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Dev,
    #[default]
    Test,
}
