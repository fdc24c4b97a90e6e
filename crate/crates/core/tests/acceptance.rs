//! One PASS/FAIL line per acceptance criterion.
//!
//! Run with `cargo test -p accent-core --test acceptance -- --nocapture` to
//! see the report; the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use accent_core::baselines::{accuracy, content_word_predict, deviation_mask, majority_from_counts};
use accent_core::corpus::{synth_corpus, StopwordList, SynthSpec, Token, Utterance};
use accent_core::experiments::*;
use accent_core::featurizer::{
    ablate, extract_features, hnr_from_r, rms_energy, zcr, Ablation, FeatureGroup, FeatureParams, Waveform,
};
use accent_core::model::{build_examples, AccentModel, Context, InputMode, ModelConfig};
use accent_core::nnkernel::gradcheck::{op_suite, SUITE_OPS};
use tempfile::TempDir;

type Outcome = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn gradients() -> Outcome {
    let checks = op_suite(5, 2024).map_err(err)?;
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let covered = SUITE_OPS.iter().all(|op| checks.iter().any(|c| c.op == *op && c.instances >= 5));
    let failing: Vec<_> = checks.iter().filter(|c| !(c.max_rel_error < 1e-4)).map(|c| c.op).collect();
    Ok((
        covered && failing.is_empty(),
        format!("{} ops x 5 instances, worst rel. error {worst:.2e}, failing {failing:?}", checks.len()),
    ))
}

fn sine(freq: f64, amp: f64, n: usize, sr: u32) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(sr)).sin()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn features() -> Outcome {
    let sr = 16_000;
    let params = FeatureParams::default();
    let mut worst_f0: f64 = 0.0;
    for f in (80..=400).step_by(10).map(f64::from) {
        let w = Waveform::new(sine(f, 0.5, sr as usize / 2, sr), sr).map_err(err)?;
        let fm = extract_features(&w, &params).map_err(err)?;
        let errors: Vec<f64> = fm.column(0).map(|v| (f64::from(v) - f).abs()).collect();
        worst_f0 = worst_f0.max(median(errors));
    }
    // 25 ms windows holding a whole number of periods.
    let mut worst_rms: f64 = 0.0;
    for (f, a) in [(200.0, 0.1), (200.0, 0.5), (400.0, 0.9), (120.0, 0.3)] {
        let s = sine(f, a, 400, sr);
        worst_rms = worst_rms.max((rms_energy(&s) - a / SQRT_2).abs());
        // The extracted track (Hann-weighted) on a half-second tone.
        let w = Waveform::new(sine(f, a, sr as usize / 2, sr), sr).map_err(err)?;
        let track: Vec<f64> = extract_features(&w, &params).map_err(err)?.column(1).map(f64::from).collect();
        worst_rms = worst_rms.max((median(track) - a / SQRT_2).abs());
    }
    let square: Vec<f64> = (0..400).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let alternating: Vec<f64> = (0..101).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
    let zcr_exact = zcr(&alternating) == 1.0
        && zcr(&[0.2; 64]) == 0.0
        && zcr(&square) == 199.0 / 399.0
        && zcr(&[0.0, -1.0, 0.0, 1.0]) == 2.0 / 3.0;
    let hnr0 = hnr_from_r(0.5);
    Ok((
        worst_f0 <= 3.0 && worst_rms <= 1e-3 && zcr_exact && hnr0 == 0.0,
        format!(
            "worst median F0 error {worst_f0:.2} Hz (80-400 Hz), worst RMS error {worst_rms:.1e}, ZCR exact {zcr_exact}, HNR(0.5) {hnr0} dB"
        ),
    ))
}

fn words(ws: &[&str]) -> Utterance {
    Utterance {
        id: "ex".into(),
        speaker: "s".into(),
        tokens: ws
            .iter()
            .enumerate()
            .map(|(i, w)| Token::new(*w, i as f64 * 0.3, i as f64 * 0.3 + 0.25, 0))
            .collect(),
        audio_ref: None,
    }
}

fn baselines() -> Outcome {
    let sw = StopwordList::english();
    let a = content_word_predict(&words(&["but", "that", "would", "require", "the", "union"]), &sw);
    let b = content_word_predict(&words(&["she", "agrees", "with", "Mary", "Conroy"]), &sw);
    let (pos, total) = (15_544, 28_489);
    let label = majority_from_counts(pos, total);
    let gold: Vec<u8> = (0..total).map(|i| u8::from(i < pos)).collect();
    let acc = accuracy(&vec![label; total], &gold).map_err(err)?;
    Ok((
        a == [0, 0, 0, 1, 0, 1] && b == [0, 1, 0, 1, 1] && label == 1 && (acc - 0.5456).abs() <= 1e-4,
        format!("content-word {a:?} / {b:?}; majority predicts {label} with accuracy {acc:.4}"),
    ))
}

fn overfit() -> Outcome {
    let spec = SynthSpec {
        n_utterances: 10,
        ..SynthSpec::default()
    };
    let data = Dataset::from_synth(&synth_corpus(&spec, 11).map_err(err)?, &FeatureParams::default()).map_err(err)?;
    let cfg = ModelConfig {
        epochs: 300,
        ..ModelConfig::speech_text()
    };
    let split = Split {
        train: data.ids(),
        dev: vec![],
        test: vec![],
    };
    let prep = prepare(&data, &cfg, &Ablation::None, &split).map_err(err)?;
    let vocab_size = prep.vocab.as_ref().map_or(0, |v| v.size());
    let mut model = AccentModel::new(cfg.clone(), vocab_size, 1).map_err(err)?;
    // Stop at the first epoch that reaches the target.
    let ran = fit(&mut model, &prep.train, cfg.epochs, 1, |_, _, m| {
        let (acc, _) = evaluate(m, &prep.train)?;
        Ok(if acc >= 0.99 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    })
    .map_err(err)?;
    let (acc, _) = evaluate(&model, &prep.train).map_err(err)?;
    Ok((
        acc >= 0.99,
        format!(
            "train accuracy {acc:.4} after {ran} of {} epochs ({} parameters)",
            cfg.epochs,
            model.num_parameters()
        ),
    ))
}

/// Five-speaker corpus where accents are carried chiefly by F0. Each
/// utterance sits in its own register, so absolute F0 says little and the
/// other tokens of the utterance are the reference.
fn ordering_corpus() -> SynthSpec {
    SynthSpec {
        n_utterances: 500,
        min_tokens: 5,
        max_tokens: 12,
        utterance_f0_jitter_st: 3.0,
        ..SynthSpec::default()
    }
}

/// Reduced-width model so that 3 seeds of every condition fit the budget
/// on one core.
fn ordering_model() -> ModelConfig {
    ModelConfig {
        cnn_channels: vec![32, 64, 64],
        lstm_hidden: 32,
        batch_size: 8,
        learning_rate: 3e-3,
        ..ModelConfig::speech()
    }
}

fn ordering(runs: &mut Vec<RunReport>) -> Outcome {
    let spec = ordering_corpus();
    let synth = synth_corpus(&spec, 1).map_err(err)?;
    let data = Dataset::from_synth(&synth, &FeatureParams::default()).map_err(err)?;
    let plan = make_folds(data.corpus(), 0).map_err(err)?;
    let protocol = Protocol {
        seeds: vec![1, 2, 3],
        folds: 1,
    };
    let base = ordering_model();
    let mut run = |cfg: &ModelConfig, ab: &Ablation| -> Result<RunReport, String> {
        let r = run_crossval(&data, cfg, ab, &plan, &protocol).map_err(err)?;
        if !r.failed.is_empty() {
            return Err(format!("{} diverged run(s)", r.failed.len()));
        }
        runs.push(r.clone());
        Ok(r)
    };
    let full = run(&base, &Ablation::None)?;
    let three = run(&base.clone().with_context(Context::ThreeToken, true), &Ablation::None)?;
    let one = run(&base.clone().with_context(Context::OneToken, false), &Ablation::None)?;
    let mut single = BTreeMap::new();
    for g in FeatureGroup::ALL {
        single.insert(g, run(&base, &Ablation::drop(&[g]))?.test.mean);
    }
    let text_cfg = ModelConfig {
        input_mode: InputMode::Text,
        lstm_hidden: base.lstm_hidden,
        batch_size: base.batch_size,
        learning_rate: base.learning_rate,
        ..ModelConfig::text()
    };
    let text = run(&text_cfg, &Ablation::None)?;

    let sw = StopwordList::english();
    let test = &plan.splits[0].test;
    let mut cw = Vec::new();
    let mut gold = Vec::new();
    for id in test {
        let u = data.utterance(id).map_err(err)?;
        cw.extend(content_word_predict(u, &sw));
        gold.extend(u.labels());
    }
    let cw_acc = accuracy(&cw, &gold).map_err(err)?;
    let dev_mask = deviation_mask(&gold, &cw);
    let speech_dev = full.masked_test_accuracy(|_| dev_mask.clone()).unwrap_or(f64::NAN);
    let text_dev = text.masked_test_accuracy(|_| dev_mask.clone()).unwrap_or(f64::NAN);

    let pts = |x: f64| 100.0 * x;
    let (f, t, o) = (full.dev.mean, three.dev.mean, one.dev.mean);
    let a = pts(f - t) > 0.5 && pts(t - o) > 0.5;
    let b = pts(full.test.mean - cw_acc) > 1.0;
    let pitch = single[&FeatureGroup::Pitch];
    let c = single.iter().all(|(g, &v)| *g == FeatureGroup::Pitch || pitch < v);
    let d = speech_dev > text_dev;
    let groups: Vec<String> = single.iter().map(|(g, v)| format!("-{g} {v:.4}")).collect();
    Ok((
        a && b && c && d,
        format!(
            "(a) {a}: dev full {f:.4} > three {t:.4} > one {o:.4}; (b) {b}: speech {:.4} vs content-word {cw_acc:.4}; \
             (c) {c}: {}; (d) {d}: deviation subset ({} tokens) speech {speech_dev:.4} vs text {text_dev:.4}",
            full.test.mean,
            groups.join(" "),
            dev_mask.iter().filter(|&&m| m).count()
        ),
    ))
}

fn duration_only() -> Outcome {
    let spec = SynthSpec {
        n_utterances: 1,
        ..SynthSpec::default()
    };
    let s = synth_corpus(&spec, 21).map_err(err)?;
    let u = &s.corpus.utterances[0];
    let real = &s.waveforms[0];
    // Same length and token timings, unrelated audio.
    let other = Waveform::new(
        (0..real.samples.len())
            .map(|i| 0.3 * (2.0 * PI * 310.0 * i as f64 / 16_000.0).sin() * ((i / 1000) % 3) as f64)
            .collect(),
        real.sample_rate_hz,
    )
    .map_err(err)?;
    let params = FeatureParams::default();
    let fa = extract_features(real, &params).map_err(err)?;
    let fb = extract_features(&other, &params).map_err(err)?;
    let model = AccentModel::<f32>::new(ModelConfig::speech(), 0, 3).map_err(err)?;
    let predict = |fm| -> Result<Vec<[f64; 2]>, String> {
        let ex = build_examples(u, Some(fm), None, model.config()).map_err(err)?;
        Ok(model
            .predict_utterance(&ex)
            .map_err(err)?
            .iter()
            .map(|p| p.logits)
            .collect())
    };
    let raw_differs = predict(&fa)? != predict(&fb)?;
    let a = ablate(&fa, &Ablation::DurationOnly).map_err(err)?;
    let b = ablate(&fb, &Ablation::DurationOnly).map_err(err)?;
    let same = predict(&a)? == predict(&b)?;
    Ok((
        same && raw_differs,
        format!(
            "{} tokens: all-ones predictions bit-identical {same}, full-feature predictions differ {raw_differs}",
            u.len()
        ),
    ))
}

fn harness(previous: &[RunReport]) -> Outcome {
    let spec = SynthSpec {
        n_utterances: 40,
        ..SynthSpec::default()
    };
    let data = Dataset::from_synth(&synth_corpus(&spec, 4).map_err(err)?, &FeatureParams::default()).map_err(err)?;
    let plan = make_folds(data.corpus(), 2).map_err(err)?;
    let leak_free = plan.splits.iter().all(|s| s.check_disjoint().is_ok());
    let cfg = ModelConfig {
        cnn_channels: vec![8, 16, 16],
        lstm_hidden: 8,
        text_embed_dim: 16,
        epochs: 5,
        batch_size: 8,
        ..ModelConfig::speech_text()
    };
    let protocol = Protocol {
        seeds: vec![1, 2],
        folds: 2,
    };
    let dir = TempDir::new().map_err(err)?;
    let mut csvs = Vec::new();
    let mut reports = Vec::new();
    for i in 0..2 {
        let r = run_crossval(&data, &cfg, &Ablation::None, &plan, &protocol).map_err(err)?;
        let path = dir.path().join(format!("run{i}.csv"));
        write_crossval_csv(&path, &r).map_err(err)?;
        csvs.push(std::fs::read(&path).map_err(err)?);
        reports.push(r);
    }
    let identical = csvs[0] == csvs[1];

    // Brute-force epoch selection from every per-epoch log seen in this suite.
    let mut checked = 0;
    let mut selection_ok = true;
    for r in previous.iter().chain(&reports) {
        for run in &r.runs {
            let best = run.epochs.iter().map(|e| e.dev_acc).fold(f64::NEG_INFINITY, f64::max);
            let first = run.epochs.iter().find(|e| e.dev_acc == best).expect("nonempty log");
            selection_ok &= run.selected_epoch == first.epoch && run.test_acc == first.test_acc;
            checked += 1;
        }
    }
    let rows = read_crossval_csv(dir.path().join("run0.csv")).map_err(err)?;
    let mut by_run: BTreeMap<(usize, u64), Vec<CrossvalRow>> = BTreeMap::new();
    for row in rows {
        by_run.entry((row.fold, row.seed)).or_default().push(row);
    }
    for run in &reports[0].runs {
        let log = &by_run[&(run.fold, run.seed)];
        let best = log.iter().map(|e| e.dev_acc).fold(f64::NEG_INFINITY, f64::max);
        selection_ok &= log.iter().find(|e| e.dev_acc == best).map(|e| e.epoch) == Some(run.selected_epoch);
    }
    let mut leaky = plan.clone();
    let moved = leaky.splits[0].test[0].clone();
    leaky.splits[0].dev.push(moved);
    let refused = run_crossval(&data, &cfg, &Ablation::None, &leaky, &protocol)
        .err()
        .is_some_and(|e| e.to_string().contains("leakage"));
    Ok((
        leak_free && identical && selection_ok && refused,
        format!(
            "splits disjoint {leak_free}, leaking plan refused {refused}, rerun CSV bit-identical {identical}, \
             epoch selection verified on {checked} runs {selection_ok}"
        ),
    ))
}

fn fold_plan() -> Outcome {
    let spec = SynthSpec {
        n_utterances: 100,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(&spec, 8).map_err(err)?.corpus;
    let plan = make_folds(&corpus, 17).map_err(err)?;
    let sizes_ok = plan.splits.len() == 10
        && plan
            .splits
            .iter()
            .all(|s| (s.test.len(), s.dev.len(), s.train.len()) == (10, 10, 80));
    let mut tested: Vec<&String> = plan.splits.iter().flat_map(|s| &s.test).collect();
    tested.sort();
    tested.dedup();
    let partition = tested.len() == 100;
    let disjoint = plan.splits.iter().all(|s| s.check_disjoint().is_ok());
    Ok((
        sizes_ok && partition && disjoint,
        format!("10 splits of 10/10/80 {sizes_ok}, test blocks cover every utterance once {partition}, disjoint {disjoint}"),
    ))
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let mut all = true;
    let mut record = |n: usize, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let el = t.elapsed();
        let in_time = budget.is_none_or(|b| el <= b);
        let (pass, detail) = match out {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let limit = budget.map_or(String::new(), |b| format!(" (limit {} s)", b.as_secs()));
        let line = format!(
            "criterion {n}: {} | {detail} | {:.1} s{limit}",
            if pass { "PASS" } else { "FAIL" },
            el.as_secs_f64()
        );
        println!("{line}");
        lines.push(line);
        all &= pass;
    };
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let mut runs = Vec::new();
    record(1, mins(1), &mut gradients);
    record(2, mins(1), &mut features);
    record(3, None, &mut baselines);
    record(4, mins(2), &mut overfit);
    record(5, mins(30), &mut || ordering(&mut runs));
    record(6, None, &mut duration_only);
    record(7, None, &mut || harness(&runs));
    record(8, None, &mut fold_plan);
    assert!(all, "failing criteria:\n{}", lines.join("\n"));
}
