use super::*;
use crate::domain::{RecordingKey, SensorLocation, StyleLabel, SubjectId};
use ndarray::{Array2, Array3};
use rand::Rng;

fn tiny_cnn_lstm() -> CnnLstmSpec {
    CnnLstmSpec {
        subsegments: 4,
        subsegment_len: 16,
        channels: 3,
        input_downsample: 1,
        conv_blocks: vec![vec![3, 3], vec![4]],
        kernel_size: 3,
        pooling_mode: PoolingMode::PerBlock,
        pool_size: 2,
        reduce_factor: 2,
        lstm_hidden: 3,
        lstm_layers: 2,
        head: vec![5, N_STYLES],
    }
}

fn tiny_cnn() -> CnnSpec {
    CnnSpec {
        input_len: 64,
        channels: 3,
        input_downsample: 2,
        filters: vec![3, 4],
        kernel_size: 3,
        pool_size: 2,
        head: vec![6, 5, N_STYLES],
    }
}

fn random_input(batch: usize, len: usize, seed: u64) -> Array3<f64> {
    let mut rng = stream_rng(seed, 0);
    Array3::from_shape_fn((batch, len, 3), |_| rng.random_range(-1.0..1.0))
}

fn gradient_check(spec: ModelSpec) {
    let mut model = build(&spec, 3).unwrap();
    // Off the initial point: zero biases put dead-input units exactly on the rectifier kink.
    let mut rng = stream_rng(17, 0);
    for v in &mut model.params {
        *v += rng.random_range(-0.05..0.05);
    }
    let net = &model.network;
    let x = random_input(3, net.input_shape().0, 11);
    let labels = [1, 5, 2];
    let (_, grad) = net.loss_and_grad(&model.params, &x, &labels).unwrap();
    let n = net.n_params();
    let probe: Vec<usize> = (0..100).map(|i| i * n / 100).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &i in &probe {
        let mut p = model.params.clone();
        p[i] += h;
        let up = net.loss(&p, &x, &labels).unwrap();
        p[i] -= 2.0 * h;
        let down = net.loss(&p, &x, &labels).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-4);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "worst relative gradient error {worst}");
}

#[test]
fn cnn_lstm_gradient_matches_finite_differences() {
    gradient_check(ModelSpec::CnnLstm(tiny_cnn_lstm()));
}

#[test]
fn cnn_lstm_literal_pooling_gradient() {
    let spec = CnnLstmSpec {
        pooling_mode: PoolingMode::Literal,
        lstm_layers: 1,
        ..tiny_cnn_lstm()
    };
    gradient_check(ModelSpec::CnnLstm(spec));
}

#[test]
fn cnn_gradient_matches_finite_differences() {
    gradient_check(ModelSpec::Cnn(tiny_cnn()));
}

#[test]
fn default_cnn_lstm_shapes() {
    let net = Network::build(&ModelSpec::CnnLstm(CnnLstmSpec::default())).unwrap();
    assert_eq!(net.first_conv_shape(), Some((3, 3, 64)));
    assert_eq!(net.output_len(), 8);
    assert_eq!(net.head_sizes(), vec![200, 8]);
    // 625 → 312 → 156 → 78, then mean-pool by 8 → 9 steps of 256 channels.
    assert_eq!(net.embed_dim(), 9 * 256);
}

#[test]
fn default_cnn_shapes() {
    let spec = ModelSpec::Cnn(CnnSpec::default());
    let a = Network::build(&spec).unwrap();
    let b = Network::build(&spec).unwrap();
    assert_eq!(a.head_sizes(), vec![384, 200, 120, 8]);
    assert_eq!(a.first_conv_shape(), Some((3, 3, 128)));
    assert_eq!(a.n_params(), b.n_params());
}

#[test]
fn inconsistent_specs_are_rejected() {
    let too_much_pooling = CnnLstmSpec {
        reduce_factor: 100,
        ..tiny_cnn_lstm()
    };
    assert!(matches!(build_cnn_lstm(&too_much_pooling, 0), Err(Error::Parameter(_))));
    let wrong_head = CnnSpec {
        head: vec![10, 7],
        ..tiny_cnn()
    };
    assert!(matches!(build_cnn(&wrong_head, 0), Err(Error::Parameter(_))));
    let even_kernel = CnnSpec {
        kernel_size: 4,
        ..tiny_cnn()
    };
    assert!(build_cnn(&even_kernel, 0).is_err());
}

#[test]
fn spec_round_trips_through_json() {
    let spec = ModelSpec::CnnLstm(CnnLstmSpec::default());
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    let spec = ModelSpec::Cnn(CnnSpec::default());
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
}

#[test]
fn untrained_output_is_on_simplex() {
    for spec in [ModelSpec::CnnLstm(tiny_cnn_lstm()), ModelSpec::Cnn(tiny_cnn())] {
        let model = build(&spec, 5).unwrap();
        let x = random_input(4, model.network.input_shape().0, 2);
        let p = model.network.predict_proba(&model.params, &x).unwrap();
        assert_eq!(p.dim(), (4, 8));
        for row in p.rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn initialization_is_seeded() {
    let spec = ModelSpec::CnnLstm(tiny_cnn_lstm());
    assert_eq!(build(&spec, 9).unwrap().params, build(&spec, 9).unwrap().params);
    assert_ne!(build(&spec, 9).unwrap().params, build(&spec, 10).unwrap().params);
}

#[test]
fn sub_segment_embedding_ignores_position() {
    let spec = tiny_cnn_lstm();
    let model = build_cnn_lstm(&spec, 1).unwrap();
    let tile = random_input(1, spec.subsegment_len, 4);
    let mut x = random_input(1, spec.input_len_total(), 8);
    for pos in [0, 3] {
        let start = pos * spec.subsegment_len;
        x.slice_mut(ndarray::s![0, start..start + spec.subsegment_len, ..])
            .assign(&tile.slice(ndarray::s![0, .., ..]));
    }
    let e = model.network.embed(&model.params, &x);
    for k in 0..e.dim().2 {
        assert_eq!(e[[0, 0, k]], e[[0, 3, k]]);
    }
    assert_ne!(e.slice(ndarray::s![0, 0, ..]), e.slice(ndarray::s![0, 1, ..]));
}

#[test]
fn prepare_pools_each_step_then_normalizes() {
    let spec = CnnLstmSpec {
        subsegments: 2,
        subsegment_len: 5,
        input_downsample: 2,
        conv_blocks: vec![vec![2]],
        pool_size: 1,
        reduce_factor: 1,
        ..tiny_cnn_lstm()
    };
    let net = Network::build(&ModelSpec::CnnLstm(spec)).unwrap();
    assert_eq!(net.input_shape(), (4, 3));
    let raw = Array2::from_shape_fn((10, 3), |(t, c)| (t * 10 + c) as f64);
    let x = net.prepare(raw.view(), &[1.0, 0.0, 0.0], &[2.0, 1.0, 1.0]).unwrap();
    // Steps cover rows 0..5 and 5..10; the odd sample of each step is dropped.
    let expect_x = [5.0, 25.0, 55.0, 75.0].map(|m: f64| (m - 1.0) / 2.0);
    for (t, e) in expect_x.iter().enumerate() {
        assert_eq!(x[[t, 0]], *e);
    }
    assert_eq!(x[[2, 2]], 57.0);
    assert!(matches!(net.prepare(raw.slice(ndarray::s![..9, ..]), &[0.0; 3], &[1.0; 3]), Err(Error::Contract(_))));
}

#[test]
fn wrong_input_shape_is_contract_error() {
    let model = build_cnn(&tiny_cnn(), 0).unwrap();
    let x = random_input(1, model.network.input_shape().0 - 1, 0);
    assert!(matches!(model.network.logits(&model.params, &x), Err(Error::Contract(_))));
}

fn segment(style: StyleLabel, start: usize, data: Array2<f64>) -> Segment {
    Segment {
        origin: SegmentOrigin {
            recording: RecordingKey {
                subject: SubjectId("S01".into()),
                style,
                sensor: SensorLocation::Com,
            },
            start,
        },
        fs: 500,
        data,
    }
}

/// Two styles separated by the frequency and level of a noisy vertical sine.
fn two_style_fixture(n_per_class: usize, len: usize, seed: u64) -> (Vec<Segment>, Vec<usize>) {
    let mut rng = stream_rng(seed, 1);
    let mut segs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n_per_class {
        for (label, style, freq, offset) in [(0, StyleLabel::EggBeater, 3.0, 0.2), (1, StyleLabel::Bouncing, 7.0, -0.2)] {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let data = Array2::from_shape_fn((len, 3), |(t, c)| {
                let s = (std::f64::consts::TAU * freq * t as f64 / len as f64 + phase).sin();
                let base = if c == 2 { s + offset } else { 0.3 * s };
                base + 0.2 * rng.random_range(-1.0..1.0)
            });
            segs.push(segment(style, i * len, data));
            labels.push(label);
        }
    }
    (segs, labels)
}

fn fixture_spec() -> CnnLstmSpec {
    CnnLstmSpec {
        subsegments: 4,
        subsegment_len: 32,
        conv_blocks: vec![vec![4], vec![6]],
        reduce_factor: 2,
        lstm_hidden: 6,
        lstm_layers: 1,
        head: vec![12, N_STYLES],
        ..tiny_cnn_lstm()
    }
}

impl CnnLstmSpec {
    fn input_len_total(&self) -> usize {
        self.subsegments * self.subsegment_len
    }
}

fn refs(s: &[Segment]) -> Vec<&Segment> {
    s.iter().collect()
}

#[test]
fn learns_a_trivial_two_style_task() {
    let spec = fixture_spec();
    let (train_s, train_y) = two_style_fixture(40, spec.input_len_total(), 1);
    let (val_s, val_y) = two_style_fixture(20, spec.input_len_total(), 2);
    let val_s: Vec<Segment> = val_s
        .into_iter()
        .map(|mut s| {
            s.origin.start += 1_000_000;
            s
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 16,
        learning_rate: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    };
    let model = build_cnn_lstm(&spec, 3).unwrap();
    let trained = train(model, &refs(&train_s), &train_y, &refs(&val_s), &val_y, &cfg).unwrap();
    let h = &trained.history.epochs;
    assert_eq!(h.len(), 10);
    assert!(h.last().unwrap().train_loss < h[0].train_loss);
    let best = &h[trained.history.best_epoch - 1];
    assert!(best.val_accuracy.unwrap() >= 0.95, "val accuracy {:?}", best.val_accuracy);
}

#[test]
fn small_training_set_uses_one_partial_batch() {
    let spec = fixture_spec();
    let (s, y) = two_style_fixture(10, spec.input_len_total(), 5);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let trained = train(build_cnn_lstm(&spec, 0).unwrap(), &refs(&s), &y, &[], &[], &cfg).unwrap();
    assert_eq!(trained.history.epochs.len(), 2);
    assert_eq!(trained.history.best_epoch, 2);
}

#[test]
fn training_input_errors() {
    let spec = fixture_spec();
    let (s, mut y) = two_style_fixture(2, spec.input_len_total(), 5);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let m = || build_cnn_lstm(&spec, 0).unwrap();
    assert!(matches!(train(m(), &[], &[], &[], &[], &cfg), Err(Error::Training(_))));
    assert!(matches!(
        train(m(), &refs(&s), &y, &refs(&s[..1]), &y[..1], &cfg),
        Err(Error::Contract(_))
    ));
    y[0] = 8;
    assert!(matches!(train(m(), &refs(&s), &y, &[], &[], &cfg), Err(Error::Contract(_))));
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..cfg
    };
    assert!(matches!(train(m(), &refs(&s), &[0, 1, 0, 1], &[], &[], &bad), Err(Error::Parameter(_))));
}

#[test]
fn training_is_deterministic() {
    let spec = fixture_spec();
    let (s, y) = two_style_fixture(8, spec.input_len_total(), 6);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 5,
        learning_rate: 1e-3,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train(build_cnn_lstm(&spec, 1).unwrap(), &refs(&s), &y, &[], &[], &cfg).unwrap();
    let b = train(build_cnn_lstm(&spec, 1).unwrap(), &refs(&s), &y, &[], &[], &cfg).unwrap();
    assert_eq!(a.model.params, b.model.params);
}

#[test]
fn batch_prediction_matches_single_and_repeats() {
    let spec = fixture_spec();
    let (s, y) = two_style_fixture(6, spec.input_len_total(), 7);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let trained = train(build_cnn_lstm(&spec, 2).unwrap(), &refs(&s), &y, &[], &[], &cfg).unwrap();
    let batch = trained.predict_proba_batch(&refs(&s)).unwrap();
    for (i, seg) in s.iter().enumerate() {
        let one = trained.predict_proba(seg).unwrap();
        assert_eq!(one, trained.predict_proba(seg).unwrap());
        for k in 0..N_STYLES {
            assert!((one[k] - batch[[i, k]]).abs() < 1e-5);
        }
        assert!((one.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn artifacts_round_trip_bit_identically() {
    let spec = fixture_spec();
    let (s, y) = two_style_fixture(4, spec.input_len_total(), 8);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let trained = train(build_cnn_lstm(&spec, 2).unwrap(), &refs(&s), &y, &[], &[], &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trained.save(dir.path()).unwrap();
    for f in ["spec.json", "norm.json", "params.bin", "history.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let loaded = TrainedModel::load(dir.path()).unwrap();
    assert_eq!(loaded.norm, trained.norm);
    assert_eq!(loaded.history, trained.history);
    assert_eq!(
        loaded.predict_proba_batch(&refs(&s)).unwrap(),
        trained.predict_proba_batch(&refs(&s)).unwrap()
    );
}

#[test]
fn continue_training_keeps_normalization() {
    let spec = fixture_spec();
    let (s, y) = two_style_fixture(4, spec.input_len_total(), 9);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let trained = train(build_cnn_lstm(&spec, 2).unwrap(), &refs(&s), &y, &[], &[], &cfg).unwrap();
    let (t, ty) = two_style_fixture(2, spec.input_len_total(), 10);
    let tuned = continue_training(&trained, &refs(&t), &ty, &cfg).unwrap();
    assert_eq!(tuned.norm, trained.norm);
    assert_ne!(tuned.model.params, trained.model.params);
    let same = continue_training(&trained, &[], &[], &cfg).unwrap();
    assert_eq!(same.model.params, trained.model.params);
}

#[test]
fn normalization_uses_population_statistics() {
    let a = segment(StyleLabel::EggBeater, 0, Array2::from_shape_fn((4, 3), |(t, c)| (t + c) as f64));
    let n = Normalization::fit(&[&a]);
    assert_eq!(n.mean, [1.5, 2.5, 3.5]);
    for sd in n.std {
        assert!((sd - 1.25f64.sqrt()).abs() < 1e-15);
    }
    let flat = segment(StyleLabel::EggBeater, 0, Array2::from_elem((4, 3), 2.0));
    assert_eq!(Normalization::fit(&[&flat]).std, [1.0; 3]);
}

#[test]
fn fusion_is_the_mean() {
    let v = [0.1, 0.2, 0.05, 0.05, 0.3, 0.1, 0.1, 0.1];
    assert_eq!(fuse_scores(&[v; 5]).unwrap(), v);
    let mut one0 = [0.0; 8];
    one0[0] = 1.0;
    let mut one1 = [0.0; 8];
    one1[1] = 1.0;
    let uniform = [0.125; 8];
    let fused = fuse_scores(&[one0, one1, uniform, uniform, uniform]).unwrap();
    assert!((fused[0] - 0.275).abs() < 1e-15);
    assert!((fused[1] - 0.275).abs() < 1e-15);
    assert!((fused[2] - 0.075).abs() < 1e-15);
    assert_eq!(crate::classical::argmax(&fused), 0);
    let permuted = fuse_scores(&[uniform, one1, uniform, one0, uniform]).unwrap();
    assert_eq!(crate::classical::argmax(&permuted), 0);
    for k in 0..8 {
        assert!((fused[k] - permuted[k]).abs() < 1e-15);
    }
}

#[test]
fn fusion_contract_errors() {
    let uniform = [0.125; 8];
    assert!(matches!(fuse_scores(&[uniform; 4]), Err(Error::Contract(_))));
    let mut bad = uniform;
    bad[0] = 0.5;
    assert!(matches!(fuse_scores(&[bad, uniform, uniform, uniform, uniform]), Err(Error::Contract(_))));
}

