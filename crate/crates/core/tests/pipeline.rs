use siamese_verify::data::{
    sample_random_pairs, sample_reference_anchored_pairs, synthetic, write_shard, read_shard, InstallClass, PairBalance,
};

fn pool() -> Vec<InstallClass> {
    (0..300)
        .map(|i| if i % 4 == 0 { InstallClass::Correct } else { InstallClass::Incorrect })
        .collect()
}

#[test]
fn ten_thousand_random_pairs_are_half_same() {
    let pool = pool();
    let pairs = sample_random_pairs(&pool, 10_000, 17, PairBalance::Stratified).unwrap();
    assert_eq!(pairs.iter().filter(|p| p.same).count(), 5_000);
    let cc = pairs
        .iter()
        .filter(|p| p.same && pool[p.a] == InstallClass::Correct)
        .count();
    assert!(cc > 2_000 && cc < 3_000, "same-class pairs spread over both classes: {cc}");
    assert!(pairs.iter().all(|p| p.a != p.b));
}

#[test]
fn ten_thousand_anchored_pairs_start_correct() {
    let pool = pool();
    let pairs = sample_reference_anchored_pairs(&pool, 10_000, 17, PairBalance::Stratified).unwrap();
    assert!(pairs.iter().all(|p| pool[p.a] == InstallClass::Correct));
    assert_eq!(pairs.iter().filter(|p| p.same).count(), 5_000);
    let uniform = sample_reference_anchored_pairs(&pool, 10_000, 17, PairBalance::Uniform).unwrap();
    let same = uniform.iter().filter(|p| p.same).count() as f64 / 10_000.0;
    assert!((same - 74.0 / 299.0).abs() < 0.03, "uniform partner draw follows class frequency: {same}");
}

#[test]
fn subclassed_shard_keeps_subclasses() {
    let ds = synthetic::subclassed(10, 5, 64, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.shard");
    write_shard(&ds.train, &path).unwrap();
    let back = read_shard(&path).unwrap();
    let subs: std::collections::BTreeSet<_> = back.iter().filter_map(|i| i.subclass.clone()).collect();
    assert_eq!(subs.len(), synthetic::DEFECTS.len());
}
