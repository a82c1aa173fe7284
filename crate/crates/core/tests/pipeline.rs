use spoter_vsct::model::{load_checkpoint, save_checkpoint, Checkpoint, InitMode, Spoter, SpoterConfig};
use spoter_vsct::pose_data::{load_dataset, load_dataset_with_vocabulary, save_dataset, LandmarkLayout};
use spoter_vsct::rng::{stream_rng, Stream};
use spoter_vsct::synthetic::{synthetic_dataset, SyntheticSpec};
use spoter_vsct::training::{evaluate, train, TrainConfig, VsctConfig};

fn small(classes: usize) -> SpoterConfig {
    SpoterConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        ff_dim: 32,
        max_frames: 8,
        ..SpoterConfig::new(classes)
    }
}

#[test]
fn jsonl_train_checkpoint_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let layout = LandmarkLayout::STANDARD;
    let spec = SyntheticSpec { classes: 3, per_class: 2, frames: 5, ..SyntheticSpec::default() };
    save_dataset(&synthetic_dataset(&spec), dir.path().join("train.jsonl")).unwrap();
    save_dataset(&synthetic_dataset(&SyntheticSpec { seed: 1, per_class: 1, ..spec }), dir.path().join("val.jsonl")).unwrap();

    let train_set = load_dataset(dir.path().join("train.jsonl"), &layout).unwrap();
    let val = load_dataset_with_vocabulary(dir.path().join("val.jsonl"), &layout, &train_set.vocabulary).unwrap();
    let cfg = TrainConfig { epochs: 3, use_vsct: true, seed: 5, ..TrainConfig::default() };
    let model = Spoter::init(small(3), InitMode::Standard, &mut stream_rng(5, Stream::Init, 0, 0)).unwrap();
    let mut seen = 0;
    let (model, history) =
        train(model, &train_set, Some(&val), &cfg, Some(&VsctConfig::default()), |_| seen += 1).unwrap();
    assert_eq!((seen, history.len()), (3, 3));
    for s in &history {
        assert!(s.loss.is_finite());
        assert_eq!(s.main_updates, train_set.len());
        assert!(s.val_top1.is_some());
        assert!(!s.vsct_selected.is_empty());
    }

    // f32 storage: evaluation after reload agrees on every top-k
    let path = dir.path().join("m.sptr");
    let mut ck = Checkpoint::new(model.clone());
    ck.vocabulary = Some(train_set.vocabulary.glosses().to_vec());
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.vocabulary, ck.vocabulary);
    let before = evaluate(&model, &val, &[1, 3], true).unwrap();
    let after = evaluate(&back.model, &val, &[1, 3], true).unwrap();
    assert_eq!(before.accuracy, after.accuracy);
}

#[test]
fn fuzz_checkpoint_seed_decodes() {
    let bytes = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fuzz/corpus/checkpoint/tiny.sptr")).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ck.model.config().input_dim, 4);
    assert_eq!(ck.vocabulary.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
}
