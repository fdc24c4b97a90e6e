use super::*;
use crate::corpus::{Token, Utterance};
use crate::featurizer::{ablate, FeatureMatrix, N_FEATURES};
use crate::nnkernel::AdamConfig;
use rand::Rng as _;

fn small(mode: InputMode) -> ModelConfig {
    ModelConfig {
        cnn_channels: vec![8, 12, 12],
        lstm_hidden: 6,
        lstm_layers: 2,
        text_embed_dim: 5,
        dropout: 0.0,
        input_mode: mode,
        ..ModelConfig::default()
    }
}

/// Tokens with the given frame boundaries on the 10 ms grid.
fn utterance(bounds: &[(usize, usize)], labels: &[u8]) -> Utterance {
    Utterance {
        id: "u".into(),
        speaker: "s".into(),
        tokens: bounds
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&(a, b), &l))| Token::new(format!("w{i}"), a as f64 * 0.01, b as f64 * 0.01, l))
            .collect(),
        audio_ref: None,
    }
}

fn random_features(n: usize, seed: u64) -> FeatureMatrix {
    let mut r = rng::stream(seed, "test-features", &[]);
    FeatureMatrix::from_rows((0..n * N_FEATURES).map(|_| r.gen_range(-1.0f32..1.0)).collect(), 0.01).unwrap()
}

fn with_rows(fm: &FeatureMatrix, rows: std::ops::Range<usize>, seed: u64) -> FeatureMatrix {
    let mut r = rng::stream(seed, "perturb", &[]);
    let mut data = fm.as_slice().to_vec();
    for i in rows {
        for c in 0..N_FEATURES {
            data[i * N_FEATURES + c] += r.gen_range(0.5f32..2.0);
        }
    }
    FeatureMatrix::from_rows(data, 0.01).unwrap()
}

fn vocab() -> Vocabulary {
    Vocabulary::from_ranked_types((0..6).map(|i| format!("w{i}")).collect())
}

fn logits(model: &AccentModel<f64>, u: &Utterance, fm: &FeatureMatrix) -> Vec<[f64; 2]> {
    let v = vocab();
    let ex = build_examples(u, Some(fm), Some(&v), model.config()).unwrap();
    model.predict_utterance(&ex).unwrap().iter().map(|p| p.logits).collect()
}

fn differs(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() > 1e-9
}

/// Exact parameter count from the architecture description.
fn expected_params(c: &ModelConfig, vocab: usize) -> usize {
    let mut n = 0;
    let mut width = 0;
    if c.input_mode.uses_speech() {
        let mut cin = 6;
        for &co in &c.cnn_channels {
            n += co * cin * c.cnn_kernel_width + co;
            cin = co;
        }
        width += cin;
    }
    if c.input_mode.uses_text() {
        n += vocab * c.text_embed_dim;
        width += c.text_embed_dim;
    }
    if c.use_lstm {
        let h = c.lstm_hidden;
        for _ in 0..c.lstm_layers {
            n += 2 * (4 * h * width + 4 * h * h + 4 * h);
            width = 2 * h;
        }
    }
    n + 2 * width + 2
}

#[test]
fn parameter_counts_match_architecture() {
    for mode in [InputMode::Speech, InputMode::Text, InputMode::SpeechText] {
        for use_lstm in [true, false] {
            let c = ModelConfig {
                input_mode: mode,
                use_lstm,
                ..ModelConfig::default()
            };
            let m = AccentModel::<f32>::new(c.clone(), 3001, 1).unwrap();
            assert_eq!(m.num_parameters(), expected_params(&c, 3001), "{mode:?} lstm={use_lstm}");
        }
    }
    let paper_scale = AccentModel::<f32>::new(ModelConfig::speech_text(), 3001, 1).unwrap();
    let n = paper_scale.num_parameters();
    assert!((1_200_000..120_000_000).contains(&n), "{n}");
}

#[test]
fn initialization_follows_fan_in_bounds() {
    let m = AccentModel::<f64>::new(ModelConfig::speech_text(), 50, 3).unwrap();
    for (name, t) in m.params().iter() {
        let fan_in = match name {
            n if n.starts_with("conv") && n.ends_with("weight") => t.shape[1] * t.shape[2],
            n if n.ends_with("w_ih") || n.ends_with("w_hh") || n == "out.weight" => t.shape[1],
            _ => continue,
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        assert!(t.data.iter().all(|v| v.abs() <= bound), "{name}");
    }
    let bias = m.params().get(m.params().find("lstm0.fwd.bias").unwrap());
    let h = 128;
    assert!(bias.data[h..2 * h].iter().all(|&v| v == 1.0));
    assert!(bias.data[..h].iter().chain(&bias.data[2 * h..]).all(|&v| v == 0.0));
    let embed = m.params().get(m.params().find("embed.weight").unwrap());
    let mean = embed.data.iter().sum::<f64>() / embed.data.len() as f64;
    let var = embed.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / embed.data.len() as f64;
    assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.05, "{mean} {var}");
}

#[test]
fn untrained_predictions_are_normalized() {
    let mut r = rng::stream(5, "shapes", &[]);
    for mode in [InputMode::Speech, InputMode::Text, InputMode::SpeechText] {
        let model = AccentModel::<f64>::new(small(mode), vocab().size(), 9).unwrap();
        for trial in 0..5 {
            let m = r.gen_range(1..6);
            let mut bounds = Vec::new();
            let mut t = r.gen_range(0..10);
            for _ in 0..m {
                let len = r.gen_range(3..40);
                bounds.push((t, t + len));
                t += len + r.gen_range(0..5);
            }
            let u = utterance(&bounds, &vec![1; m]);
            let fm = random_features(t + 4, trial);
            let ex = build_examples(&u, Some(&fm), Some(&vocab()), model.config()).unwrap();
            let preds = model.predict_utterance(&ex).unwrap();
            assert_eq!(preds.len(), m);
            for p in preds {
                let [a, b] = p.probs();
                assert!((0.0..=1.0).contains(&p.p_accent));
                assert!((a + b - 1.0).abs() < 1e-6);
                assert_eq!(p.label, u8::from(p.logits[1] > p.logits[0]));
            }
        }
    }
}

#[test]
fn prediction_from_extreme_logits() {
    let p = Prediction::from_logits(-800.0, 800.0);
    assert_eq!(p.p_accent, 1.0);
    assert_eq!(p.label, 1);
    let p = Prediction::from_logits(800.0, -800.0);
    assert_eq!(p.p_accent, 0.0);
    assert_eq!(p.label, 0);
}

#[test]
fn lstm_carries_information_backwards() {
    let model = AccentModel::<f64>::new(small(InputMode::Speech), 0, 2).unwrap();
    let u = utterance(&[(0, 30), (30, 60), (60, 120)], &[0, 1, 0]);
    let fm = random_features(120, 1);
    let before = logits(&model, &u, &fm);
    let after = logits(&model, &u, &with_rows(&fm, 60..120, 2));
    assert!(differs(before[0], after[0]));
}

#[test]
fn cnn_only_is_local_to_its_receptive_field() {
    let mut cfg = small(InputMode::Speech);
    cfg.use_lstm = false;
    let model = AccentModel::<f64>::new(cfg.clone(), 0, 2).unwrap();
    // Token 0 owns output frames [0, 5); they see input frames up to
    // 4·8 + 35 = 67.
    let u = utterance(&[(0, 40), (40, 200)], &[0, 1]);
    let fm = random_features(200, 4);
    let before = logits(&model, &u, &fm);
    let far = logits(&model, &u, &with_rows(&fm, 68..200, 3));
    assert!((before[0][0] - far[0][0]).abs() < 1e-12 && (before[0][1] - far[0][1]).abs() < 1e-12);
    assert!(differs(before[1], far[1]));
    let near = logits(&model, &u, &with_rows(&fm, 60..68, 3));
    assert!(differs(before[0], near[0]));
}

#[test]
fn equal_interior_spans_of_ones_pool_identically() {
    let model = AccentModel::<f64>::new(small(InputMode::Speech), 0, 4).unwrap();
    let u = utterance(&[(0, 80), (80, 120), (120, 160), (160, 200), (200, 300)], &[0; 5]);
    let ones = ablate(&random_features(300, 8), &Ablation::DurationOnly).unwrap();
    let ex = &build_examples(&u, Some(&ones), None, model.config()).unwrap()[0];
    assert_eq!(ex.spans[1].1 - ex.spans[1].0, ex.spans[3].1 - ex.spans[3].0);
    let mut g = Graph::new(model.params());
    let emb = model.encode_speech(&mut g, ex, None).unwrap();
    let v = g.value(emb);
    let c = 12;
    assert_eq!(&v[c..2 * c], &v[3 * c..4 * c]);
    assert_ne!(&v[0..c], &v[c..2 * c]);
}

#[test]
fn zero_input_with_zero_bias_encodes_to_zero() {
    let mut model = AccentModel::<f64>::new(small(InputMode::Speech), 0, 4).unwrap();
    for i in 0..3 {
        let id = model.params().find(&format!("conv{i}.bias")).unwrap();
        model.params_mut().get_mut(id).data.fill(0.0);
    }
    let u = utterance(&[(0, 30), (30, 64)], &[0, 1]);
    let fm = FeatureMatrix::from_rows(vec![0.0; 64 * N_FEATURES], 0.01).unwrap();
    let ex = &build_examples(&u, Some(&fm), None, model.config()).unwrap()[0];
    let mut g = Graph::new(model.params());
    let emb = model.encode_speech(&mut g, ex, None).unwrap();
    assert!(g.value(emb).iter().all(|&v| v == 0.0));
}

#[test]
fn features_within_a_frame_are_not_interchangeable() {
    let model = AccentModel::<f64>::new(small(InputMode::Speech), 0, 6).unwrap();
    let u = utterance(&[(0, 40)], &[1]);
    let fm = random_features(40, 11);
    let mut data = fm.as_slice().to_vec();
    data[20 * N_FEATURES..21 * N_FEATURES].rotate_left(1);
    let permuted = FeatureMatrix::from_rows(data, 0.01).unwrap();
    assert!(differs(logits(&model, &u, &fm)[0], logits(&model, &u, &permuted)[0]));
}

#[test]
fn windows_only_see_their_tokens() {
    let bounds = [(0, 20), (20, 45), (45, 70), (70, 100), (100, 130)];
    let u = utterance(&bounds, &[0, 1, 0, 1, 1]);
    let fm = random_features(130, 12);
    let moved = with_rows(&fm, 70..130, 5);

    let one = AccentModel::<f64>::new(small(InputMode::Speech).with_context(Context::OneToken, false), 0, 3).unwrap();
    let (a, b) = (logits(&one, &u, &fm), logits(&one, &u, &moved));
    assert_eq!(&a[..3], &b[..3]);
    assert!(differs(a[3], b[3]));

    let three = AccentModel::<f64>::new(small(InputMode::Speech).with_context(Context::ThreeToken, true), 0, 3).unwrap();
    let (a, b) = (logits(&three, &u, &fm), logits(&three, &u, &moved));
    assert_eq!(&a[..2], &b[..2]);
    assert!(differs(a[2], b[2]));
}

#[test]
fn window_shapes_at_edges() {
    let cfg = small(InputMode::Speech).with_context(Context::ThreeToken, true);
    let u = utterance(&[(0, 30)], &[1]);
    let ex = build_examples(&u, Some(&random_features(30, 1)), None, &cfg).unwrap();
    assert_eq!(ex.len(), 1);
    assert_eq!((ex[0].len(), ex[0].target), (1, Some(0)));

    let u = utterance(&[(0, 30), (30, 60), (60, 90)], &[1, 0, 1]);
    let ex = build_examples(&u, Some(&random_features(90, 1)), None, &cfg).unwrap();
    let shape: Vec<_> = ex.iter().map(|e| (e.len(), e.target)).collect();
    assert_eq!(shape, [(2, Some(0)), (3, Some(1)), (2, Some(1))]);
    assert_eq!(ex[0].frames.as_ref().unwrap().shape, [6, 60]);
}

#[test]
fn text_tokens_outside_vocab_map_to_unk() {
    let model = AccentModel::<f64>::new(small(InputMode::Text), vocab().size(), 1).unwrap();
    let mut u = utterance(&[(0, 10), (10, 20)], &[0, 1]);
    u.tokens[1].text = "never-seen".into();
    let ex = build_examples(&u, None, Some(&vocab()), model.config()).unwrap();
    assert_eq!(ex[0].token_ids, [0, vocab().unk_id()]);
    assert_eq!(model.predict_utterance(&ex).unwrap().len(), 2);
}

#[test]
fn speech_model_requires_features() {
    let u = utterance(&[(0, 10)], &[0]);
    assert!(build_examples(&u, None, None, &small(InputMode::Speech)).is_err());
    assert!(build_examples(&u, None, None, &small(InputMode::Text)).is_err());
}

#[test]
fn duration_only_predictions_ignore_audio() {
    let model = AccentModel::<f32>::new(ModelConfig::speech(), 0, 7).unwrap();
    let u = utterance(&[(3, 25), (25, 31), (31, 70), (74, 95)], &[1, 0, 1, 1]);
    let a = ablate(&random_features(100, 1), &Ablation::DurationOnly).unwrap();
    let b = ablate(&random_features(100, 2), &Ablation::DurationOnly).unwrap();
    let pa = model.predict_utterance(&build_examples(&u, Some(&a), None, model.config()).unwrap()).unwrap();
    let pb = model.predict_utterance(&build_examples(&u, Some(&b), None, model.config()).unwrap()).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn predictions_do_not_depend_on_batch_order() {
    let model = AccentModel::<f64>::new(small(InputMode::SpeechText), vocab().size(), 1).unwrap();
    let us: Vec<_> = (0..4)
        .map(|i| (utterance(&[(0, 20 + i), (20 + i, 60)], &[1, 0]), random_features(60, i as u64)))
        .collect();
    let run = |order: &[usize]| {
        let mut out = vec![Vec::new(); us.len()];
        for &i in order {
            out[i] = logits(&model, &us[i].0, &us[i].1);
        }
        out
    };
    assert_eq!(run(&[0, 1, 2, 3]), run(&[3, 1, 0, 2]));
}

#[test]
fn whole_model_gradients_match_finite_differences() {
    let mut cfg = small(InputMode::SpeechText);
    cfg.cnn_channels = vec![3, 4, 4];
    cfg.lstm_hidden = 3;
    cfg.text_embed_dim = 2;
    let model = AccentModel::<f64>::new(cfg, vocab().size(), 5).unwrap();
    let u = utterance(&[(0, 18), (18, 40)], &[1, 0]);
    let ex = build_examples(&u, Some(&random_features(40, 3)), Some(&vocab()), model.config()).unwrap().remove(0);
    let (_, grads) = model.loss_and_grads(&ex, 1.0, None).unwrap();
    let h = 1e-6;
    let loss_at = |m: &AccentModel<f64>| m.loss_and_grads(&ex, 1.0, None).unwrap().0;
    let mut r = rng::stream(1, "fd", &[]);
    for id in model.params().ids().collect::<Vec<_>>() {
        let n = model.params().get(id).len();
        for _ in 0..3 {
            let k = r.gen_range(0..n);
            let mut plus = model.clone();
            plus.params_mut().get_mut(id).data[k] += h;
            let mut minus = model.clone();
            minus.params_mut().get_mut(id).data[k] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let an = grads.param(id).map_or(0.0, |g| g[k]);
            assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "{}[{k}]: {fd} vs {an}", model.params().name(id));
        }
    }
}

#[test]
fn small_model_overfits_a_few_utterances() {
    let mut cfg = small(InputMode::Speech);
    cfg.learning_rate = 1e-2;
    let mut model = AccentModel::<f32>::new(cfg.clone(), 0, 1).unwrap();
    let mut r = rng::stream(2, "data", &[]);
    let examples: Vec<Example> = (0..6)
        .flat_map(|i| {
            let labels: Vec<u8> = (0..4).map(|_| r.gen_range(0..2)).collect();
            let u = utterance(&[(0, 20), (20, 45), (45, 60), (60, 90)], &labels);
            build_examples(&u, Some(&random_features(90, 100 + i)), None, &cfg).unwrap()
        })
        .collect();
    let mut adam = Adam::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, model.params());
    let batch: Vec<&Example> = examples.iter().collect();
    let first = model.train_step(&batch, &mut adam, &mut r).unwrap();
    let mut last = first;
    for _ in 0..150 {
        last = model.train_step(&batch, &mut adam, &mut r).unwrap();
    }
    assert!(last < 0.1 * first, "{first} -> {last}");
    let preds = model.predict_utterance(&examples).unwrap();
    assert_eq!(example_accuracy(&preds, &examples), 1.0);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = small(InputMode::SpeechText);
    let model = AccentModel::<f32>::new(cfg.clone(), vocab().size(), 3).unwrap();
    let meta = ModelMeta {
        config: cfg,
        vocab: Some(vocab()),
        norm: NormStats::identity(),
        ablation: Ablation::None,
    };
    model.save(&path, &meta).unwrap();
    let (back, meta_back) = AccentModel::load(&path).unwrap();
    assert_eq!(meta_back, meta);
    assert_eq!(back.params(), model.params());
}

#[test]
fn checkpoint_shape_mismatch_is_rejected() {
    let a = AccentModel::<f32>::new(small(InputMode::Speech), 0, 1).unwrap();
    let mut cfg = small(InputMode::Speech);
    cfg.lstm_hidden = 7;
    assert!(matches!(
        AccentModel::from_params(cfg, 0, a.params().clone()),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn external_embeddings_replace_known_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.txt");
    std::fs::write(&path, "w1 1 2 3 4 5\nzzz 0 0 0 0 0\nw3 5 4 3 2 1\n").unwrap();
    let mut model = AccentModel::<f32>::new(small(InputMode::Text), vocab().size(), 1).unwrap();
    assert_eq!(load_embeddings(&path, &vocab(), &mut model).unwrap(), 2);
    let t = model.params().get(model.params().find("embed.weight").unwrap());
    assert_eq!(&t.data[5..10], &[1.0, 2.0, 3.0, 4.0, 5.0]);
    std::fs::write(&path, "w1 1 2\n").unwrap();
    assert!(load_embeddings(&path, &vocab(), &mut model).is_err());
}
