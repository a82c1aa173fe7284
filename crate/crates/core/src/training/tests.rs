use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trainer::minibatch_step;
use super::*;
use crate::diffcore::Sgd;
use crate::model::{InitMode, Spoter, SpoterConfig};
use crate::pose_data::{Dataset, GlossVocabulary, PoseFrame, PoseSequence};
use crate::synthetic::{synthetic_dataset, SyntheticSpec};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn acc(pairs: &[(usize, f64)]) -> PerClassAccuracy {
    // accuracies given as exact quarters/tenths via counts out of 20
    PerClassAccuracy::from_counts(pairs.iter().map(|&(c, a)| {
        (
            c,
            ClassAccuracy {
                correct: (a * 20.0).round() as usize,
                total: 20,
            },
        )
    }))
}

fn labelled(labels: &[usize], classes: usize) -> Dataset {
    let vocab = GlossVocabulary::new((0..classes).map(|c| format!("c{c}"))).unwrap();
    let sequences = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| PoseSequence {
            frames: vec![PoseFrame::empty()],
            gloss_id: l,
            signer_id: i as i64,
            variation_id: 0,
            source_id: String::new(),
        })
        .collect();
    Dataset::new(vocab, sequences).unwrap()
}

fn toy_model(classes: usize, seed: u64) -> Spoter {
    let cfg = SpoterConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        ff_dim: 8,
        max_frames: 8,
        ..SpoterConfig::new(classes)
    };
    Spoter::init(cfg, InitMode::Standard, &mut rng(seed)).unwrap()
}

fn toy_data(classes: usize, per_class: usize, seed: u64) -> Dataset {
    synthetic_dataset(&SyntheticSpec {
        classes,
        per_class,
        frames: 3,
        seed,
        ..SyntheticSpec::default()
    })
}

#[test]
fn per_class_counts_from_predictions() {
    let a = PerClassAccuracy::from_predictions(&[0, 0, 1, 2], &[0, 1, 1, 1]);
    assert_eq!(a.iter().collect::<Vec<_>>(), vec![(0, 0.5), (1, 1.0), (2, 0.0)]);
    assert_eq!(a.get(3), None);
    assert_eq!(a.counts(0), Some(ClassAccuracy { correct: 1, total: 2 }));
}

#[test]
fn worst_class_selection_examples() {
    let table = acc(&[(0, 0.9), (1, 0.2), (2, 0.5), (3, 0.1), (4, 1.0)]);
    assert_eq!(select_worst_classes(&table, 0.4, 5), vec![3, 1]);
    assert_eq!(select_worst_classes(&table, 1.0, 5).len(), 5);

    // ⌈0.3·3⌉ = 1; the tie at 0.5 goes to the lower id.
    let tie = acc(&[(0, 0.5), (1, 0.5), (2, 0.9)]);
    assert_eq!(select_worst_classes(&tie, 0.3, 3), vec![0]);
    assert_eq!(select_worst_classes(&tie, 0.5, 3), vec![0, 1]);

    assert_eq!(vsct_class_count(1e-12, 100), 1);
    assert_eq!(vsct_class_count(0.1, 30), 3);
    assert_eq!(vsct_class_count(0.34, 3), 2);
    assert_eq!(vsct_class_count(1.0, 7), 7);
}

#[test]
fn vsct_batch_examples() {
    let d = labelled(&[0, 1, 1, 2, 2, 2, 0, 1, 1, 2, 2, 2, 3], 4);
    let s: Vec<usize> = (0..d.len()).filter(|&i| [1, 2].contains(&d.sequences[i].gloss_id)).collect();
    assert_eq!(s.len(), 10);

    let mut full = build_vsct_minibatch(&d, &[1, 2], 1.0, TauBase::Restricted, &mut rng(0));
    full.sort_unstable();
    assert_eq!(full, s);

    let half = build_vsct_minibatch(&d, &[2, 1], 0.5, TauBase::Restricted, &mut rng(1));
    assert_eq!(half.len(), 5);
    let mut dedup = half.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), 5);
    assert!(half.iter().all(|i| s.contains(i)));

    assert!(build_vsct_minibatch(&d, &[], 1.0, TauBase::Restricted, &mut rng(2)).is_empty());
    assert_eq!(build_vsct_minibatch(&d, &[3], 0.01, TauBase::Restricted, &mut rng(2)), vec![12]);
    // full base: ⌊0.5·13⌋ = 6, capped by |S| = 1 for class 3
    assert_eq!(build_vsct_minibatch(&d, &[1, 2], 0.5, TauBase::Full, &mut rng(3)).len(), 6);
    assert_eq!(build_vsct_minibatch(&d, &[3], 0.5, TauBase::Full, &mut rng(3)).len(), 1);
}

#[test]
fn balanced_sampler_equalizes_classes() {
    let d = labelled(&[0, 1, 1, 1], 2);
    let draws = balanced_sampler(&d, &mut rng(5), Some(10_000)).unwrap();
    let class0 = draws.iter().filter(|&&i| i == 0).count() as f64 / 10_000.0;
    assert!((class0 - 0.5).abs() <= 0.02, "{class0}");

    let single = labelled(&[0, 0, 0], 1);
    assert!(balanced_sampler(&single, &mut rng(1), Some(100)).unwrap().iter().all(|&i| i < 3));

    let gap = labelled(&[0, 2], 3);
    assert!(matches!(BalancedSampler::new(&gap), Err(TrainError::EmptyClass { class: 1, .. })));
}

#[test]
fn balanced_sampler_on_equal_classes_is_uniform_over_samples() {
    let d = labelled(&[0, 0, 1, 1, 2, 2, 3, 3], 4);
    let n = 10_000;
    let draws = balanced_sampler(&d, &mut rng(17), Some(n)).unwrap();
    let mut counts = [0f64; 8];
    for i in draws {
        counts[i] += 1.0;
    }
    let expected = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // χ²(7) upper 0.001 quantile
    assert!(chi2 < 24.322, "chi-square {chi2}");
}

#[test]
fn scoring_edge_cases() {
    let logits = vec![vec![0.1, 0.9, 0.5], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let e = score_logits(&logits, &[1, 0, 2], &[1, 3, 5]).unwrap();
    assert_eq!(e.top(1), Some(1.0));
    assert_eq!(e.top(3), Some(1.0));
    assert_eq!(e.top(5), Some(1.0));
    assert!(e.per_class.iter().all(|(_, a)| a == 1.0));

    let e = score_logits(&logits, &[2, 2, 0], &[1, 2]).unwrap();
    assert_eq!(e.top(1), Some(0.0));
    assert_eq!(e.top(2), Some(2.0 / 3.0));
    assert!(score_logits(&[], &[], &[1]).is_err());
}

#[test]
fn minibatch_step_averages_gradients() {
    let d = toy_data(3, 2, 1);
    let x = prepare_input(&d.sequences[0], true).unwrap();
    let label = d.sequences[0].gloss_id;
    let mut single = toy_model(3, 2);
    let mut double = single.clone();
    let mut sgd1 = Sgd::new(0.01, 0.0, 0.0);
    let mut sgd2 = Sgd::new(0.01, 0.0, 0.0);
    let l1 = minibatch_step(&mut single, &mut sgd1, &[(x.clone(), label)], None).unwrap();
    let l2 = minibatch_step(&mut double, &mut sgd2, &[(x.clone(), label), (x, label)], None).unwrap();
    assert_eq!(l1, l2);
    for (a, b) in single.params().tensors().iter().zip(double.params().tensors()) {
        assert!(a.max_abs_diff(b) < 1e-15);
    }
}

#[test]
fn trainer_counters_and_determinism() {
    let data = toy_data(4, 2, 3);
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let run = |vsct: Option<&VsctConfig>, cfg: &TrainConfig| {
        super::train(toy_model(4, 9), &data, None, cfg, vsct, |_| {}).unwrap().1
    };
    let plain = run(None, &cfg);
    for s in &plain {
        assert!(s.vsct_selected.is_empty());
        assert_eq!(s.main_updates, data.len());
        assert_eq!(s.vsct_updates, 0);
        assert_eq!(s.optimizer_steps, data.len());
        assert!(s.val_top1.is_none());
    }
    let again = run(None, &cfg);
    let loss_bits = |h: &[EpochStats]| h.iter().map(|s| s.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(loss_bits(&plain), loss_bits(&again));

    let vcfg = TrainConfig { use_vsct: true, ..cfg };
    let vsct = VsctConfig {
        gamma: 0.5,
        tau: 1.0,
        ..VsctConfig::default()
    };
    for s in run(Some(&vsct), &vcfg) {
        assert_eq!(s.vsct_selected.len(), 2);
        // tau = 1: every sample of the two selected classes
        assert_eq!(s.vsct_updates, 4);
        assert_eq!(s.optimizer_steps, data.len() + 1);
    }
}

#[test]
fn vsct_step_uses_the_training_learning_rate() {
    let train = toy_data(3, 2, 4);
    let mut model = toy_model(3, 1);
    let before = model.clone();
    let mut sgd = Sgd::new(0.001, 0.0, 0.0);
    let cfg = TrainConfig::default();
    let vsct = VsctConfig {
        gamma: 1.0,
        tau: 1.0,
        vsct_augmentation: crate::preprocess::AugmentationDistribution::zero(),
        ..VsctConfig::default()
    };
    let out = vsct_step(&mut model, &mut sgd, &train, &train, &vsct, &cfg, &mut rng(0)).unwrap();
    assert_eq!(out.selected.len(), 3);
    assert_eq!(out.batch.len(), train.len());
    assert_eq!(sgd.lr, 0.001);

    // Same update as one averaged step on the un-augmented batch.
    let mut reference = before;
    let samples: Vec<_> = out
        .batch
        .iter()
        .map(|&i| (prepare_input(&train.sequences[i], true).unwrap(), train.sequences[i].gloss_id))
        .collect();
    minibatch_step(&mut reference, &mut Sgd::new(0.001, 0.0, 0.0), &samples, None).unwrap();
    for (a, b) in model.params().tensors().iter().zip(reference.params().tensors()) {
        assert!(a.max_abs_diff(b) < 1e-15);
    }
}

#[test]
fn trainer_rejects_inconsistent_inputs() {
    let train = toy_data(3, 2, 5);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let other_vocab = toy_data(4, 1, 5);
    assert!(matches!(
        Trainer::new(toy_model(3, 0), &train, Some(&other_vocab), cfg.clone(), None),
        Err(TrainError::Config(_))
    ));
    assert!(matches!(
        Trainer::new(toy_model(4, 0), &train, None, cfg.clone(), None),
        Err(TrainError::Config(_))
    ));
    let vcfg = TrainConfig { use_vsct: true, ..cfg.clone() };
    assert!(Trainer::new(toy_model(3, 0), &train, None, vcfg, None).is_err());
    let long = synthetic_dataset(&SyntheticSpec {
        classes: 3,
        per_class: 1,
        frames: 9,
        ..SyntheticSpec::default()
    });
    assert!(matches!(
        Trainer::new(toy_model(3, 0), &long, None, cfg.clone(), None),
        Err(TrainError::Model(_))
    ));
    let bad = TrainConfig { learning_rate: 0.0, ..cfg };
    assert!(Trainer::new(toy_model(3, 0), &train, None, bad, None).is_err());
}

#[test]
fn config_validation_ranges() {
    assert!(VsctConfig::default().validate().is_ok());
    for gamma in [0.0, 1.5, f64::NAN] {
        assert!(VsctConfig { gamma, ..VsctConfig::default() }.validate().is_err());
    }
    assert!(VsctConfig { tau: 0.0, ..VsctConfig::default() }.validate().is_err());
    assert!(TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    assert_eq!("full".parse::<TauBase>(), Ok(TauBase::Full));
}

proptest! {
    #[test]
    fn accuracy_is_monotone_in_k(
        seed in any::<u64>(),
        n in 1usize..40,
        c in 2usize..12,
    ) {
        use rand::Rng;
        let mut r = rng(seed);
        let logits: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| r.gen_range(-3i32..3) as f64).collect()).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..c)).collect();
        let ks: Vec<usize> = (1..=c + 2).collect();
        let e = score_logits(&logits, &labels, &ks).unwrap();
        for w in ks.windows(2) {
            prop_assert!(e.top(w[0]).unwrap() <= e.top(w[1]).unwrap());
        }
        prop_assert_eq!(e.top(c), Some(1.0));
    }

    #[test]
    fn selection_size_and_order(
        accs in prop::collection::vec(0usize..=20, 1..30),
        gamma in 0.001f64..=1.0,
    ) {
        let c = accs.len();
        let table = PerClassAccuracy::from_counts(accs.iter().enumerate().map(|(i, &k)| (i, ClassAccuracy { correct: k, total: 20 })));
        let w = select_worst_classes(&table, gamma, c);
        prop_assert_eq!(w.len(), vsct_class_count(gamma, c).min(c));
        let worst_kept = w.iter().map(|&i| accs[i]).max().unwrap();
        for i in 0..c {
            if !w.contains(&i) {
                prop_assert!(accs[i] >= worst_kept);
            }
        }
    }
}
