use std::path::Path;

use super::*;
use crate::error::Error;
use crate::seed::SeedTuple;

fn write_solid(path: &Path, size: u32, value: u8) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    image::RgbImage::from_pixel(size, size, image::Rgb([value; 3]))
        .save(path)
        .unwrap();
}

fn bracket_tree(root: &Path, edge_correct: bool) {
    for (split, n) in [("train", 3), ("validation", 2)] {
        for i in 0..n {
            write_solid(&root.join(format!("{split}/correct/c{i}.png")), 8, 255);
            write_solid(&root.join(format!("{split}/incorrect/sub{}/x{i}.png", i % 2)), 8, 0);
        }
    }
    write_solid(&root.join("edge-validation/incorrect/e0.png"), 8, 10);
    if edge_correct {
        write_solid(&root.join("edge-validation/correct/k0.png"), 8, 250);
    }
}

#[test]
fn white_and_black_png_normalize_to_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let white = dir.path().join("w.png");
    let black = dir.path().join("b.png");
    write_solid(&white, 256, 255);
    write_solid(&black, 256, 0);
    let w = decode_and_normalize(&white, 64).unwrap();
    assert_eq!((w.height(), w.width(), w.data().len()), (64, 64, 64 * 64 * 3));
    assert!(w.data().iter().all(|&v| v == 1.0));
    let b = decode_and_normalize(&black, 64).unwrap();
    assert!(b.data().iter().all(|&v| v == 0.0));
}

#[test]
fn undecodable_file_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.png");
    std::fs::write(&p, b"not an image").unwrap();
    match decode_and_normalize(&p, 64) {
        Err(Error::Decode { path, .. }) => assert_eq!(path, p),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn index_counts_subclasses_and_edge_reuse() {
    let dir = tempfile::tempdir().unwrap();
    bracket_tree(dir.path(), false);
    std::fs::write(dir.path().join("train/correct/notes.txt"), b"hello").unwrap();
    let idx = load_dataset_index(dir.path(), Layout::Bracket, 1).unwrap();
    let counts = idx.counts();
    assert_eq!(counts[&DatasetSplit::Train][&InstallClass::Correct], 3);
    assert_eq!(counts[&DatasetSplit::Validation][&InstallClass::Incorrect], 2);
    assert_eq!(idx.unreadable.len(), 1);
    let edge = idx.split(DatasetSplit::EdgeValidation).unwrap();
    assert_eq!(edge.iter().filter(|r| r.class == InstallClass::Correct).count(), 2);
    assert!(edge.iter().any(|r| r.id == "validation/correct/c0.png"));
    assert!(idx.split(DatasetSplit::EdgeTrain).is_err());
    let sub = idx.split(DatasetSplit::Train).unwrap().iter().find(|r| r.id.ends_with("x1.png")).unwrap();
    assert_eq!(sub.subclass.as_deref(), Some("sub1"));
    assert_eq!(load_dataset_index(dir.path(), Layout::Bracket, 1).unwrap(), idx);
}

#[test]
fn edge_split_with_own_correct_images() {
    let dir = tempfile::tempdir().unwrap();
    bracket_tree(dir.path(), true);
    let idx = load_dataset_index(dir.path(), Layout::Bracket, 0).unwrap();
    let edge = idx.split(DatasetSplit::EdgeValidation).unwrap();
    assert_eq!(edge.len(), 2);
}

#[test]
fn layout_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset_index(dir.path(), Layout::Bracket, 0),
        Err(Error::Layout { .. })
    ));
    bracket_tree(dir.path(), false);
    std::fs::remove_dir_all(dir.path().join("validation/incorrect")).unwrap();
    match load_dataset_index(dir.path(), Layout::Bracket, 0) {
        Err(Error::Layout { path, .. }) => assert!(path.ends_with("validation/incorrect")),
        other => panic!("unexpected {other:?}"),
    }
    std::fs::create_dir_all(dir.path().join("validation/incorrect")).unwrap();
    assert!(matches!(
        load_dataset_index(dir.path(), Layout::Bracket, 0),
        Err(Error::EmptyClass(_))
    ));
}

fn omniglot_tree(root: &Path) {
    for (alphabet, chars) in [("Latin", 10), ("Greek", 7), ("Korean", 3)] {
        for c in 0..chars {
            for k in 0..2 {
                write_solid(&root.join(format!("{alphabet}/character{c:02}/{k}.png")), 12, 255);
            }
        }
    }
}

#[test]
fn omniglot_subset_splits_by_character() {
    let dir = tempfile::tempdir().unwrap();
    omniglot_tree(dir.path());
    let idx = build_omniglot_subset(dir.path(), &["Latin", "Greek"], 3).unwrap();
    let train = idx.split(DatasetSplit::Train).unwrap();
    let val = idx.split(DatasetSplit::Validation).unwrap();
    let classes: std::collections::BTreeSet<_> = train.iter().map(|r| r.class).collect();
    assert_eq!(classes.len(), 2);
    let chars = |recs: &[ImageRecord]| -> std::collections::BTreeSet<String> {
        recs.iter()
            .map(|r| format!("{:?}/{}", r.class, r.subclass.clone().unwrap()))
            .collect()
    };
    assert!(chars(train).is_disjoint(&chars(val)));
    let latin_train = train.iter().filter(|r| r.class == InstallClass::Correct).count();
    assert_eq!(latin_train, 7 * 2);
    assert_eq!(build_omniglot_subset(dir.path(), &["Latin", "Greek"], 3).unwrap(), idx);
    assert!(matches!(
        build_omniglot_subset(dir.path(), &["Latin", "Tengwar"], 3),
        Err(Error::Layout { .. })
    ));
    let imgs = load_records(&train[..2], 16).unwrap();
    assert_eq!(imgs[0].pixels.width(), 16);
}

fn sample_image() -> LabeledImage {
    let ds = synthetic::subclassed(1, 1, 64, 4);
    ds.train[1].clone()
}

#[test]
fn identity_policy_is_exact() {
    let img = sample_image();
    for i in 0..20 {
        let out = augment(&img, &AugmentationPolicy::identity(), SeedTuple::new(1, 2, i));
        assert_eq!(out, img);
    }
    let p = AugmentParams {
        rotation_deg: 0.0,
        translate_x: 0.0,
        translate_y: 0.0,
        zoom: 1.0,
        shear: 0.0,
        brightness: 1.0,
        hflip: true,
        vflip: false,
    };
    let flipped = apply_params(&img.pixels, &p, FillMode::Nearest);
    let w = img.pixels.width();
    assert_eq!(flipped.pixel(5, 0), img.pixels.pixel(5, w - 1));
    let twice = apply_params(&flipped, &p, FillMode::Nearest);
    assert_eq!(twice, img.pixels);
}

#[test]
fn augmentation_is_seeded_and_label_preserving() {
    let img = sample_image();
    let policy = AugmentationPolicy::default();
    let a = augment(&img, &policy, SeedTuple::new(9, 1, 3));
    let b = augment(&img, &policy, SeedTuple::new(9, 1, 3));
    let c = augment(&img, &policy, SeedTuple::new(9, 2, 3));
    assert_eq!(a, b);
    assert_ne!(a.pixels, c.pixels);
    assert_eq!((a.class, &a.subclass, &a.id), (img.class, &img.subclass, &img.id));
    assert_eq!(a.pixels.data().len(), img.pixels.data().len());
    assert!(a.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn constant_fill_shows_at_borders() {
    let img = Image::filled(16, 16, 0.5);
    let p = AugmentParams {
        rotation_deg: 0.0,
        translate_x: 0.25,
        translate_y: 0.0,
        zoom: 1.0,
        shear: 0.0,
        brightness: 1.0,
        hflip: false,
        vflip: false,
    };
    let out = apply_params(&img, &p, FillMode::Constant(0.0));
    assert_eq!(out.pixel(8, 0), [0.0; 3]);
    assert_eq!(out.pixel(8, 15), [0.5; 3]);
    let out = apply_params(&img, &p, FillMode::Nearest);
    assert!(out.data().iter().all(|&v| v == 0.5));
}

#[test]
fn anchored_pairs_always_start_correct() {
    let pool: Vec<InstallClass> = (0..30)
        .map(|i| if i % 3 == 0 { InstallClass::Correct } else { InstallClass::Incorrect })
        .collect();
    for balance in [PairBalance::Stratified, PairBalance::Uniform] {
        let pairs = sample_reference_anchored_pairs(&pool, 500, 2, balance).unwrap();
        assert!(pairs.iter().all(|p| pool[p.a] == InstallClass::Correct));
        assert!(pairs.iter().all(|p| p.same == (pool[p.a] == pool[p.b])));
    }
    let only_correct = vec![InstallClass::Correct; 4];
    let pairs = sample_reference_anchored_pairs(&only_correct, 50, 2, PairBalance::Stratified).unwrap();
    assert!(pairs.iter().all(|p| p.same && p.a != p.b));
    let only_incorrect = vec![InstallClass::Incorrect; 4];
    assert!(matches!(
        sample_reference_anchored_pairs(&only_incorrect, 5, 2, PairBalance::Stratified),
        Err(Error::EmptyClass(_))
    ));
}

#[test]
fn random_pairs_cover_all_orders() {
    let pool: Vec<InstallClass> = (0..20)
        .map(|i| if i < 7 { InstallClass::Correct } else { InstallClass::Incorrect })
        .collect();
    let pairs = sample_random_pairs(&pool, 2000, 5, PairBalance::Stratified).unwrap();
    let mut combos = std::collections::BTreeSet::new();
    for p in &pairs {
        assert_eq!(p.same, pool[p.a] == pool[p.b]);
        combos.insert((pool[p.a], pool[p.b]));
    }
    assert_eq!(combos.len(), 4);
    assert_eq!(pairs.iter().filter(|p| p.same).count(), 1000);
    assert_eq!(pairs, sample_random_pairs(&pool, 2000, 5, PairBalance::Stratified).unwrap());
    let single = vec![InstallClass::Incorrect; 3];
    let pairs = sample_random_pairs(&single, 40, 5, PairBalance::Stratified).unwrap();
    assert!(pairs.iter().all(|p| p.same));
    let empty: Vec<InstallClass> = Vec::new();
    assert!(sample_random_pairs(&empty, 4, 0, PairBalance::Uniform).is_err());
}

#[test]
fn shard_round_trip() {
    let ds = synthetic::separable(2, 1, 64, 0);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("train.shard");
    write_shard(&ds.train, &p).unwrap();
    assert_eq!(read_shard(&p).unwrap(), ds.train);
    let mut bytes = std::fs::read(&p).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_shard(&p), Err(Error::Corruption(_))));
}

#[test]
fn synthetic_layout_loads_back() {
    let ds = synthetic::subclassed(5, 5, 64, 1);
    let dir = tempfile::tempdir().unwrap();
    synthetic::write_layout(&ds, dir.path()).unwrap();
    let idx = load_dataset_index(dir.path(), Layout::Bracket, 0).unwrap();
    let subs = idx.subclass_counts();
    assert_eq!(subs[&DatasetSplit::Train].len(), 1 + synthetic::DEFECTS.len());
    let loaded = load_records(idx.split(DatasetSplit::Train).unwrap(), 64).unwrap();
    assert_eq!(loaded.len(), 10);
    let batch = to_batch(&loaded.iter().map(|l| &l.pixels).collect::<Vec<_>>()).unwrap();
    assert_eq!(batch.shape(), &[10, 64, 64, 3]);
}
