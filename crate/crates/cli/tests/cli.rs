use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn accent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = accent(args);
    assert!(
        out.status.success(),
        "accent {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every regular file under `dir` with its bytes, sorted by relative path.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL_MODEL: &str = r#"
[model]
cnn_layers = 2
cnn_channels = [4, 8]
cnn_kernel_width = 5
lstm_layers = 1
lstm_hidden = 4
epochs = 2
batch_size = 8

[protocol]
seeds = [1]
folds = 2
"#;

#[test]
fn content_word_baseline_on_single_utterance() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("b.jsonl");
    let words = [("she", 0), ("agrees", 1), ("with", 0), ("Mary", 0), ("Conroy", 1)];
    let tokens: Vec<String> = words
        .iter()
        .enumerate()
        .map(|(i, (w, l))| {
            format!(
                r#"{{"text":"{w}","start_s":{:.1},"end_s":{:.1},"label":{l}}}"#,
                i as f64 * 0.3,
                i as f64 * 0.3 + 0.2
            )
        })
        .collect();
    fs::write(&corpus, format!(r#"{{"id":"b","speaker":"s","tokens":[{}]}}"#, tokens.join(",")) + "\n").unwrap();
    let out_dir = dir.path().join("out");
    let stdout = ok(&[
        "baseline",
        "--kind",
        "content-word",
        "--corpus",
        s(&corpus),
        "--out",
        s(&out_dir),
    ]);
    assert!(stdout.contains("accuracy 0.8000"), "{stdout}");
    assert!(out_dir.join("config.toml").exists());
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--seed", "7", "--utterances", "12", "--out", s(d)]);
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(p, _)| p.ends_with("corpus.jsonl")));
    assert!(ta.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "wav")).count() == 12);
    let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    assert_eq!(names(&ta), names(&tb));
    for ((p, x), (_, y)) in ta.iter().zip(&tb) {
        assert!(x == y, "{} differs", p.display());
    }
}

#[test]
fn crossval_end_to_end_and_archived_rerun() {
    let dir = TempDir::new().unwrap();
    let demo = dir.path().join("demo");
    ok(&["synth", "--seed", "3", "--out", s(&demo)]);
    let corpus = demo.join("corpus.jsonl");
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL_MODEL).unwrap();

    let first = dir.path().join("first");
    let stdout = ok(&[
        "crossval",
        "--config",
        s(&cfg),
        "--corpus",
        s(&corpus),
        "--cache",
        s(&dir.path().join("cache")),
        "--out",
        s(&first),
    ]);
    assert!(stdout.contains("2 runs"), "{stdout}");
    let csv = fs::read_to_string(first.join("crossval.csv")).unwrap();
    assert!(csv.starts_with("fold,seed,epoch,dev_acc,test_acc\n"), "{csv}");
    assert_eq!(csv.lines().count(), 1 + 2 * 2);

    // Rerun from the archived config alone, into a fresh directory.
    let second = dir.path().join("second");
    ok(&["crossval", "--config", s(&first.join("config.toml")), "--out", s(&second)]);
    for f in ["crossval.csv", "summary.json"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn train_then_eval_checkpoint() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, format!("[synth]\nn_utterances = 40\n{SMALL_MODEL}")).unwrap();
    let out = dir.path().join("run");
    let stdout = ok(&["train", "--config", s(&cfg), "--mode", "speech-text", "--out", s(&out)]);
    assert!(stdout.contains("fold 0 seed 1"), "{stdout}");
    let ckpt = out.join("model.ckpt");
    assert!(ckpt.exists());
    let report = ok(&[
        "eval",
        "--config",
        s(&out.join("config.toml")),
        "--checkpoint",
        s(&ckpt),
        "--fold",
        "0",
        "--part",
        "test",
    ]);
    assert!(report.contains("class 1: precision"), "{report}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "[model]\nepoch = 3\n").unwrap();
    let out = accent(&["crossval", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epoch"), "{err}");
}

#[test]
fn missing_audio_is_a_featurize_error() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let line = r#"{"id":"u","speaker":"s","tokens":[{"text":"hi","start_s":0.0,"end_s":0.2,"label":1}],"audio":"wav/u.wav"}"#;
    fs::write(&corpus, format!("{line}\n")).unwrap();
    let out = accent(&["featurize", "--corpus", s(&corpus), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("extracting features"), "{err}");
}

#[test]
fn help_lists_subcommands() {
    let help = ok(&["--help"]);
    for sub in [
        "synth",
        "featurize",
        "train",
        "crossval",
        "speaker-indep",
        "ablate",
        "vocab-shrink",
        "hparam",
        "cnn-sweep",
        "baseline",
        "eval",
    ] {
        assert!(help.contains(sub), "{sub} missing from --help");
    }
}
