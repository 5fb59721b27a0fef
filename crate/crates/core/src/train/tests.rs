use super::*;
use crate::data::{synthetic, InstallClass, LabeledImage, PairRegime};
use crate::error::Error;
use crate::model::{build_baseline_cnn, build_snn, BackboneConfig, CnnConfig, ModelGraph, SnnConfig};

fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts { tp, fp, tn, fn_ }
}

#[test]
fn hand_confusion_arithmetic() {
    let r = MetricsReport::from_counts(counts(30, 10, 50, 10)).unwrap();
    assert_eq!((r.precision, r.recall, r.accuracy), (0.75, 0.75, 0.80));
    assert_eq!((r.fdr, r.fnr), (0.25, 0.25));
}

#[test]
fn all_incorrect_predictor_on_balanced_split() {
    let actual: Vec<InstallClass> = (0..200)
        .map(|i| if i < 100 { InstallClass::Correct } else { InstallClass::Incorrect })
        .collect();
    let predicted = vec![InstallClass::Incorrect; 200];
    let c = ConfusionCounts::from_predictions(&actual, &predicted).unwrap();
    let r = MetricsReport::from_counts(c).unwrap();
    assert_eq!((r.precision, r.recall, r.accuracy, r.fdr, r.fnr), (0.5, 1.0, 0.5, 0.5, 0.0));
}

#[test]
fn perfect_and_degenerate_reports() {
    let r = MetricsReport::from_counts(counts(5, 0, 7, 0)).unwrap();
    assert_eq!((r.precision, r.recall, r.accuracy, r.fdr, r.fnr), (1.0, 1.0, 1.0, 0.0, 0.0));
    let r = MetricsReport::from_counts(counts(0, 0, 7, 3)).unwrap();
    assert_eq!((r.precision, r.recall, r.fdr, r.fnr), (0.0, 0.0, 1.0, 1.0));
    assert!(MetricsReport::from_counts(ConfusionCounts::default()).is_err());
    assert!(ConfusionCounts::from_predictions(&[InstallClass::Correct], &[]).is_err());
}

#[test]
fn report_serializes_counts() {
    let r = MetricsReport::from_counts(counts(1, 2, 3, 4)).unwrap();
    let json = r.to_json();
    assert!(json.contains("\"fn\": 4"));
    let back: MetricsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

fn logs(n: usize) -> Vec<EpochLog> {
    (1..=n)
        .map(|e| EpochLog {
            epoch: e,
            train_loss: 1.0 / e as f64,
            train_acc: 0.5 + e as f64 / 100.0,
            val_acc: 0.123_456_789 * e as f64 % 1.0,
            seconds: 0.0,
        })
        .collect()
}

#[test]
fn epoch_log_format() {
    let text = format_epoch_log(&logs(25)).unwrap();
    assert_eq!(text.lines().count(), 26);
    assert_eq!(text.lines().next(), Some(EPOCH_LOG_HEADER));
    assert!(matches!(format_epoch_log(&[]), Err(Error::Contract(_))));
    let back = parse_epoch_log(&text).unwrap();
    for (a, b) in back.iter().zip(logs(25)) {
        assert_eq!(a.epoch, b.epoch);
        for (x, y) in [(a.train_loss, b.train_loss), (a.train_acc, b.train_acc), (a.val_acc, b.val_acc)] {
            assert!((x - y).abs() <= 5e-7 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("log.csv");
    export_epoch_log(&logs(3), &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), format_epoch_log(&logs(3)).unwrap());
    assert!(export_epoch_log(&logs(3), &dir.path().join("missing/log.csv")).is_err());
}

#[test]
fn val_acc_std_of_last_epochs() {
    let mut l = logs(7);
    for (e, v) in l.iter_mut().zip([0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 0.5]) {
        e.val_acc = v;
    }
    let s = val_acc_std(&l, 5).unwrap();
    let mean = (0.5 + 0.5 + 1.0 + 1.0 + 0.5) / 5.0;
    let var: f64 = [0.5, 0.5, 1.0, 1.0, 0.5].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
    assert!((s - var.sqrt()).abs() < 1e-12);
    assert_eq!(val_acc_std(&l[..4], 5), None);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { threshold: 1.0, ..TrainConfig::default() },
        TrainConfig { threshold: 0.0, ..TrainConfig::default() },
        TrainConfig { resolution: 100, ..TrainConfig::default() },
        TrainConfig { lr: f32::NAN, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn decisions_at_ties() {
    assert_eq!(classifier_decision(0.5, 0.5), InstallClass::Incorrect);
    assert_eq!(similarity_decision(0.5, 0.5), InstallClass::Correct);
    assert_eq!(similarity_decision(0.499, 0.5), InstallClass::Incorrect);
}

fn tiny_cnn(seed: u64) -> ModelGraph {
    let cfg = CnnConfig {
        backbone: BackboneConfig::compact(),
        init_seed: seed,
        feature_units: 16,
        ..CnnConfig::default()
    };
    build_baseline_cnn([64, 64, 3], &cfg).unwrap()
}

fn tiny_snn() -> ModelGraph {
    let cfg = SnnConfig {
        backbone: BackboneConfig::compact(),
        feature_units: 16,
        ..SnnConfig::default()
    };
    build_snn([64, 64, 3], &cfg).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        resolution: 64,
        validation_pairs: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn classifier_training_is_deterministic() {
    let ds = synthetic::separable(4, 2, 64, 0);
    let run = || {
        let mut g = tiny_cnn(3);
        let l = train_classifier(&mut g, &ds.train, &ds.validation, &quick(2)).unwrap();
        (g, l)
    };
    let (g1, l1) = run();
    let (g2, l2) = run();
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
    assert_eq!(l1.len(), 2);
    assert!(l1.iter().all(|l| l.seconds == 0.0));
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let ds = synthetic::separable(4, 2, 64, 0);
    let mut g = tiny_cnn(1);
    let before = g.params().clone();
    let cfg = TrainConfig { lr: 0.0, ..quick(1) };
    train_classifier(&mut g, &ds.train, &ds.validation, &cfg).unwrap();
    for p in g.params().iter() {
        assert_eq!(p.tensor.data(), before.get(&p.key()).unwrap().tensor.data(), "{}", p.key());
    }
}

#[test]
fn exploding_training_aborts() {
    let ds = synthetic::separable(8, 2, 64, 0);
    let mut g = tiny_cnn(1);
    let cfg = TrainConfig { lr: 1e30, ..quick(3) };
    match train_classifier(&mut g, &ds.train, &ds.validation, &cfg) {
        Err(Error::NumericalAbort { .. }) => {}
        other => panic!("expected numerical abort, got {other:?}"),
    }
}

#[test]
fn wrong_graph_kind_is_rejected() {
    let ds = synthetic::separable(2, 1, 64, 0);
    assert!(matches!(
        train_snn(&mut tiny_cnn(0), &ds.train, &ds.validation, &quick(1)),
        Err(Error::Contract(_))
    ));
    assert!(matches!(
        train_classifier(&mut tiny_snn(), &ds.train, &ds.validation, &quick(1)),
        Err(Error::Contract(_))
    ));
}

#[test]
fn same_only_pairs_raise_similarity() {
    let ds = synthetic::separable(6, 2, 64, 1);
    let correct: Vec<LabeledImage> = ds.train.iter().filter(|i| i.class == InstallClass::Correct).cloned().collect();
    let mut g = tiny_snn();
    let cfg = TrainConfig {
        lr: 1e-2,
        pair_regime: PairRegime::ReferenceAnchored,
        pairs_per_epoch: Some(16),
        ..quick(4)
    };
    let logs = train_snn(&mut g, &correct, &correct, &cfg).unwrap();
    assert_eq!(logs, {
        let mut g2 = tiny_snn();
        train_snn(&mut g2, &correct, &correct, &cfg).unwrap()
    });
    let scores = reference_scores(&g, &correct[0], &correct[1..]).unwrap();
    assert!(scores.iter().all(|&s| s > 0.5), "{scores:?}");
}

#[test]
fn constant_similarity_model_misses_every_defect() {
    let ds = synthetic::separable(2, 3, 64, 2);
    let mut g = tiny_snn();
    g.params_mut().get_mut("l1_head.weight").unwrap().tensor.data_mut()[0] = 0.0;
    g.params_mut().get_mut("l1_head.bias").unwrap().tensor.data_mut()[0] = (0.9f32 / 0.1).ln();
    g.recalibrate_batchnorm(&[&crate::data::to_batch(&ds.train.iter().map(|i| &i.pixels).collect::<Vec<_>>()).unwrap()])
        .unwrap();
    let reference = &ds.train[0];
    let r = evaluate_snn(&g, reference, &ds.validation, 0.5).unwrap();
    assert_eq!((r.recall, r.fnr), (0.0, 1.0));
    let self_score = reference_scores(&g, reference, std::slice::from_ref(reference)).unwrap();
    assert!((self_score[0] - 0.9).abs() < 1e-6);
    assert!(matches!(
        evaluate_snn(&g, &ds.train[3], &ds.validation, 0.5),
        Err(Error::Contract(_))
    ));
}
