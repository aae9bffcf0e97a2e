use super::*;
use crate::data::{generate_synthetic, Dataset, Split, SynthConfig};
use crate::error::Error;
use crate::flow::FlowModel;
use crate::numcore::Matrix;
use crate::rng::{self, streams};
use crate::gradcheck::{central_diff, rel_err};

fn small_data(seed: u64) -> Dataset<f64> {
    generate_synthetic(&SynthConfig {
        num_seen: 4,
        num_unseen: 2,
        d_v: 6,
        d_a: 5,
        samples_per_class: 30,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 32,
        hidden_dim: 16,
        d_g: 8,
        n_syn_per_unseen: 20,
        contrastive: crate::augment::ContrastiveConfig { epochs: 3, hidden_dim: 8, ..Default::default() },
        mining: Some(MiningSchedule { steps: 3, ..Default::default() }),
        classifier: ClassifierConfig { epochs: 5, ..Default::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn config_defaults_and_serde() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.batch_size, 256);
    assert_eq!(cfg.lr, 3e-4);
    assert_eq!(cfg.n_syn_per_unseen, 300);
    assert_eq!(cfg.classifier.epochs, 50);
    let json = serde_json::to_string(&cfg).unwrap();
    assert!(json.contains("\"L\":3"));
    assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), cfg);
    let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 7, "mining": {"K": 4}}"#).unwrap();
    assert_eq!(partial.epochs, 7);
    assert_eq!(partial.mining.unwrap().steps, 4);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 7}"#).is_err());
    assert!(TrainConfig { batch_size: 0, ..cfg.clone() }.validate().is_err());
    assert!(TrainConfig { p_drop: 1.5, ..cfg.clone() }.validate().is_err());
    assert!(TrainConfig { s_cap: Some(0.0), ..cfg }.validate().is_err());
}

#[test]
fn mining_is_skipped_only_when_fully_disabled() {
    let base = TrainConfig::default();
    assert!(TrainConfig { lambda_ent: 0.0, mining: None, ..base.clone() }.mining_config().is_none());
    assert!(TrainConfig { lambda_ent: 0.0, ..base.clone() }.mining_config().is_some());
    let m = TrainConfig { lambda_ent: 2.5, mining: None, ..base }.mining_config().unwrap();
    assert_eq!(m.lambda_ent, 2.5);
    assert_eq!(m.steps, 20);
}

#[test]
fn zero_epochs_returns_initialization() {
    let ds = small_data(1);
    let cfg = TrainConfig { epochs: 0, ..quick_cfg() };
    let (model, log) = train_gsmflow(&ds, &cfg).unwrap();
    assert!(log.epochs.is_empty() && log.mining.is_none());
    assert!(log.to_jsonl().is_empty());
    let init = FlowModel::<f64>::init(6, 8, 3, 16, Some(5.0), &mut rng::stream(cfg.seed, streams::INIT_FLOW)).unwrap();
    assert_eq!(model.flow, init);
}

#[test]
fn empty_seen_training_set_rejected() {
    let mut ds = small_data(1);
    ds.split.test_seen.append(&mut ds.split.train_seen);
    assert!(matches!(train_gsmflow(&ds, &quick_cfg()), Err(Error::Input { .. })));
}

#[test]
fn divergence_reports_epoch() {
    let ds = small_data(2);
    let cfg = TrainConfig { lr: 50.0, s_cap: None, mining: None, lambda_ent: 0.0, epochs: 20, ..quick_cfg() };
    match train_gsmflow(&ds, &cfg) {
        Err(Error::Divergence(msg)) => assert!(msg.contains("epoch"), "{msg}"),
        other => panic!("expected divergence, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn training_log_has_one_line_per_epoch() {
    let ds = small_data(3);
    let (_, log) = train_gsmflow(&ds, &quick_cfg()).unwrap();
    let text = log.to_jsonl();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0]["stage"], "mining");
    assert_eq!(lines[1]["stage"], "flow");
    assert_eq!(lines[5]["epoch"], 4);
    let m = log.mining.unwrap();
    assert_eq!(m.n_mined, ds.split.train_seen.len());
}

#[test]
fn loss_drops_over_fifty_epochs_on_benchmark() {
    let ds: Dataset<f64> = generate_synthetic(&SynthConfig::default()).unwrap();
    let cfg = TrainConfig { epochs: 50, mining: None, lambda_ent: 0.0, ..TrainConfig::default() };
    let (_, log) = train_gsmflow(&ds, &cfg).unwrap();
    let first = log.epochs[0].total;
    let last = log.epochs[49].total;
    assert!(first - last >= 1.0, "{first} -> {last}");
}

#[test]
fn prototype_loss_pulls_generated_centres() {
    let ds = small_data(4);
    let dist = |lambda_proto: f64| {
        let cfg = TrainConfig { lambda_proto, epochs: 40, mining: None, lambda_ent: 0.0, ..quick_cfg() };
        let (model, _) = train_gsmflow(&ds, &cfg).unwrap();
        let protos = crate::data::class_prototypes(&ds, &ds.split.train_seen).unwrap();
        let cond = model.conditions(&ds.seen_attributes()).unwrap();
        let centres = model.flow.generate(&Matrix::zeros(protos.rows(), 6), &cond).unwrap();
        let d: f64 = (0..protos.rows())
            .map(|r| centres.row(r).iter().zip(protos.row(r)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .sum();
        d / protos.rows() as f64
    };
    assert!(dist(10.0) < dist(0.0));
}

#[test]
fn generate_unseen_shapes_and_identity_flow() {
    let attrs = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    let model = TrainedModel {
        flow: FlowModel::<f64>::identity(4, 3, 2, 5, Some(5.0)).unwrap(),
        embedder: None,
        contrastive: None,
    };
    let (x, l) = generate_unseen(&model, &attrs, &[7, 9], 0, 1).unwrap();
    assert_eq!((x.rows(), l.len()), (0, 0));

    let (x, l) = generate_unseen(&model, &attrs, &[7, 9], 3, 1).unwrap();
    assert_eq!(l, vec![7, 7, 7, 9, 9, 9]);
    let mut r = rng::stream(1, streams::GENERATE);
    for &v in x.as_slice() {
        assert_eq!(v, rng::normal::<f64, _>(&mut r));
    }
    assert!(generate_unseen(&model, &attrs, &[7], 3, 1).is_err());
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    let mut r = rng::seeded(5);
    for _ in 0..20 {
        let mut clf = Classifier::<f64>::zeros(4, 3).unwrap();
        let p: Vec<f64> = (0..clf.net.num_params()).map(|_| rng::normal(&mut r)).collect();
        clf.net.set_params(&p).unwrap();
        let xs: Matrix<f64> = Matrix::from_fn(5, 4, |_, _| rng::normal(&mut r));
        let labels: Vec<usize> = (0..5).map(|i| i % 3).collect();
        let (_, grad) = clf.loss_and_grad(&xs, &labels).unwrap();
        let fd = central_diff(&p, 1e-5, |q| {
            let mut c = clf.clone();
            c.net.set_params(q).unwrap();
            c.loss_and_grad(&xs, &labels).unwrap().0
        });
        for (a, b) in grad.iter().zip(&fd) {
            assert!(rel_err(*a, *b) < 1e-4, "{a} vs {b}");
        }
    }
}

fn two_blobs(n: usize) -> (Matrix<f64>, Vec<usize>) {
    let mut r = rng::seeded(6);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let xs = Matrix::from_fn(n, 2, |i, _| {
        let centre = if labels[i] == 0 { -2.0 } else { 2.0 };
        centre + 0.3 * rng::normal::<f64, _>(&mut r)
    });
    (xs, labels)
}

#[test]
fn classifier_separates_linearly_separable_data() {
    let (xs, labels) = two_blobs(100);
    let cfg = ClassifierConfig { epochs: 200, lr: 1e-2, ..Default::default() };
    let (clf, _) = train_classifier(&xs, &labels, 2, &cfg, 0).unwrap();
    assert_eq!(clf.predict(&xs, None).unwrap(), labels);
}

#[test]
fn classifier_ignores_input_order() {
    let (xs, labels) = two_blobs(60);
    let cfg = ClassifierConfig { epochs: 5, ..Default::default() };
    let (a, ha) = train_classifier(&xs, &labels, 2, &cfg, 3).unwrap();
    let perm = rng::permutation(&mut rng::seeded(9), 60);
    let xp = xs.select_rows(&perm);
    let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
    let (b, hb) = train_classifier(&xp, &lp, 2, &cfg, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn classifier_loss_decreases_when_smoothed() {
    let ds: Dataset<f64> = generate_synthetic(&SynthConfig::default()).unwrap();
    let (xs, labels) = ds.subset(&ds.split.train_seen);
    let (_, hist) = train_classifier(&xs, &labels, ds.num_classes(), &ClassifierConfig::default(), 0).unwrap();
    let windows: Vec<f64> = hist.chunks(5).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for w in windows.windows(2) {
        assert!(w[1] < w[0], "{windows:?}");
    }
}

#[test]
fn predict_restriction_and_ties() {
    let mut clf = Classifier::<f64>::zeros(1, 3).unwrap();
    clf.net.layers_mut()[0].bias = vec![1.0, 3.0, 2.0];
    let x = Matrix::zeros(1, 1);
    assert_eq!(clf.predict(&x, None).unwrap(), vec![1]);
    assert_eq!(clf.predict(&x, Some(&[2, 0])).unwrap(), vec![2]);
    let flat = Classifier::<f64>::zeros(1, 3).unwrap();
    assert_eq!(flat.predict(&x, None).unwrap(), vec![0]);
    assert!(clf.predict(&x, Some(&[5])).is_err());
}

#[test]
fn accuracy_examples() {
    let labels = vec![0, 1, 1, 2];
    assert_eq!(per_class_accuracy(&labels, &labels, &[0, 1, 2]).unwrap().1, 1.0);

    let mut labels = vec![0; 99];
    labels.push(1);
    let mut preds = vec![0; 99];
    preds.push(0);
    let (per, mean) = per_class_accuracy(&preds, &labels, &[0, 1]).unwrap();
    assert_eq!(per, vec![1.0, 0.0]);
    assert_eq!(mean, 0.5);

    assert!(matches!(per_class_accuracy(&[0], &[0], &[0, 1]), Err(Error::Input { .. })));
}

#[test]
fn accuracy_matches_counting_oracle() {
    let mut r = rng::seeded(12);
    for _ in 0..100 {
        let n = 3 + rand::Rng::random_range(&mut r, 0..20);
        let mut labels: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut r, 0..3)).collect();
        labels[..3].copy_from_slice(&[0, 1, 2]);
        let preds: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut r, 0..3)).collect();
        let mut hits = [0u32; 3];
        let mut counts = [0u32; 3];
        for i in 0..n {
            counts[labels[i]] += 1;
            if preds[i] == labels[i] {
                hits[labels[i]] += 1;
            }
        }
        let oracle: Vec<f64> = (0..3).map(|c| hits[c] as f64 / counts[c] as f64).collect();
        let (per, mean) = per_class_accuracy(&preds, &labels, &[0, 1, 2]).unwrap();
        assert_eq!(per, oracle);
        assert_eq!(mean, oracle.iter().sum::<f64>() / 3.0);
    }
}

#[test]
fn accuracy_is_invariant_to_duplicating_a_class() {
    let labels = vec![0, 0, 0, 1, 1];
    let preds = vec![0, 1, 0, 1, 0];
    let base = per_class_accuracy(&preds, &labels, &[0, 1]).unwrap();
    let dup_labels: Vec<usize> = labels.iter().chain(&labels[..3]).copied().collect();
    let dup_preds: Vec<usize> = preds.iter().chain(&preds[..3]).copied().collect();
    assert_eq!(per_class_accuracy(&dup_preds, &dup_labels, &[0, 1]).unwrap(), base);
}

#[test]
fn harmonic_mean_examples() {
    assert_eq!(harmonic_mean(0.5, 0.5), 0.5);
    assert_eq!(harmonic_mean(0.9, 0.0), 0.0);
    assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    // 2·0.803·0.665 / 1.468 = 0.727514..., the published 72.8 after rounding.
    let h = harmonic_mean(0.803, 0.665);
    assert!((h - 1.06799 / 1.468).abs() < 1e-12);
    assert!((h - 0.728).abs() <= 5e-4);
}

#[test]
fn constant_seen_prediction_scores_zero() {
    let ds = small_data(5);
    let mut clf = Classifier::<f64>::zeros(ds.d_v(), ds.num_classes()).unwrap();
    let mut bias = vec![0.0; ds.num_classes()];
    bias[ds.seen_classes[0]] = 1.0;
    clf.net.layers_mut()[0].bias = bias;
    let r = evaluate(&clf, &ds, EvalMode::Gzsl, &TrainConfig::default()).unwrap();
    assert_eq!(r.acc_unseen, Some(0.0));
    assert_eq!(r.harmonic_mean, Some(0.0));
    assert_eq!(r.acc_seen, Some(1.0 / ds.seen_classes.len() as f64));
}

#[test]
fn report_schema_per_mode() {
    let ds = small_data(6);
    let g = serde_json::to_value(run_gzsl(&ds, &quick_cfg()).unwrap()).unwrap();
    for key in ["acc_seen", "acc_unseen", "harmonic_mean", "zsl_t1", "per_class", "config_echo", "seed"] {
        assert!(g.get(key).is_some(), "missing {key}");
    }
    assert_eq!(g["per_class"].as_array().unwrap().len(), 6);
    let z = serde_json::to_value(run_zsl(&ds, &quick_cfg()).unwrap()).unwrap();
    assert!(z.get("acc_seen").is_none() && z.get("harmonic_mean").is_none());
    assert_eq!(z["per_class"].as_array().unwrap().len(), 2);
}

#[test]
fn zsl_restriction_never_loses_to_gzsl() {
    for seed in 0..3 {
        let ds = small_data(seed);
        let run = run_pipeline(&ds, &TrainConfig { seed, ..quick_cfg() }, EvalMode::Gzsl).unwrap();
        assert!(run.report.zsl_t1 >= run.report.acc_unseen.unwrap());
    }
}

#[test]
fn pipeline_is_deterministic() {
    let ds = small_data(7);
    let a = run_pipeline(&ds, &quick_cfg(), EvalMode::Gzsl).unwrap();
    let b = run_pipeline(&ds, &quick_cfg(), EvalMode::Gzsl).unwrap();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    assert_eq!(a.model.to_json_string(), b.model.to_json_string());
}

#[test]
fn seen_only_baseline_never_predicts_unseen() {
    let ds = small_data(8);
    let r = run_seen_only_baseline(&ds, &quick_cfg()).unwrap();
    assert_eq!(r.acc_unseen, Some(0.0));
    assert_eq!(r.harmonic_mean, Some(0.0));
}

#[test]
fn model_json_round_trip() {
    let ds = small_data(9);
    let (model, _) = train_gsmflow(&ds, &quick_cfg()).unwrap();
    assert!(model.embedder.is_some() && model.contrastive.is_some());
    let back = TrainedModel::<f64>::from_json_str(&model.to_json_string()).unwrap();
    assert_eq!(back, model);

    let mut doc = model.to_json();
    doc.format_version = 2;
    let s = serde_json::to_string(&doc).unwrap();
    assert!(matches!(TrainedModel::<f64>::from_json_str(&s), Err(Error::Format(_))));

    let raw = TrainConfig { relative_positioning: false, mining: None, lambda_ent: 0.0, ..quick_cfg() };
    let (model, _) = train_gsmflow(&ds, &raw).unwrap();
    assert!(model.embedder.is_none() && model.contrastive.is_none());
    assert_eq!(model.flow.d_g(), ds.d_a());
    assert_eq!(TrainedModel::<f64>::from_json_str(&model.to_json_string()).unwrap(), model);
}

#[test]
fn variants_switch_the_right_components() {
    let base = TrainConfig::default();
    let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
    assert!(names.contains(&"GSMFlow w/o constraints") && names.contains(&"GSMFlow w/o RP"));
    for v in Variant::ALL {
        assert_eq!(serde_json::to_value(v).unwrap(), v.name());
    }
    let c = Variant::WithoutConstraints.apply(&base);
    assert!(c.mining_config().is_none() && c.lambda_perturb == 0.0 && c.lambda_proto == 0.0 && !c.relative_positioning);
    let rp = Variant::WithoutRp.apply(&base);
    assert!(rp.mining_config().is_some() && rp.lambda_perturb > 0.0 && !rp.relative_positioning);
    assert_eq!(Variant::Full.apply(&base), base);
}

#[test]
fn dataset_without_seen_test_samples_cannot_be_scored() {
    let ds = small_data(10);
    let broken = Dataset { split: Split { test_seen: vec![], ..ds.split.clone() }, ..ds.clone() };
    let clf = Classifier::<f64>::zeros(ds.d_v(), ds.num_classes()).unwrap();
    assert!(evaluate(&clf, &broken, EvalMode::Gzsl, &TrainConfig::default()).is_err());
    assert!(evaluate(&clf, &broken, EvalMode::Zsl, &TrainConfig::default()).is_ok());
}
