use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use siamese_verify::data::synthetic;
use siamese_verify::train::MetricsReport;
use siamese_verify::voting::PanelManifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_siamverify"));
    c.env_remove("SIAMVERIFY_DATA");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert_eq!(code(&o), 0, "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) {
    synthetic::write_layout(&synthetic::separable(6, 4, 64, 3), root).unwrap();
}

const QUICK: [&str; 10] = ["--backbone", "compact", "--resolution", "64", "--epochs", "1", "--batch-size", "4", "--seed", "5"];

fn quick(mut args: Vec<&str>) -> Vec<&str> {
    args.extend(QUICK);
    args
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["train", "--help"])), 0);
    assert_eq!(code(&run(&["train", "--no-such-flag"])), 4);
    assert_eq!(code(&run(&["train", "--variant", "rnn"])), 4);
    assert_eq!(code(&run(&["frobnicate"])), 4);
}

#[test]
fn config_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "variant = \"cnn-scratch\"\nbogus = 1\n").unwrap();
    let o = run(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert_eq!(code(&run(&["train", "--resolution", "100", "--data", s(dir.path())])), 4);
    assert_eq!(code(&run(&["train", "--epochs", "0", "--data", s(dir.path())])), 4);
    assert_eq!(code(&run(&["train", "--variant", "snn-transfer", "--data", s(dir.path())])), 4);
    assert_eq!(code(&run(&["train"])), 4, "no data root anywhere");
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&quick(vec!["train", "--data", s(&dir.path().join("missing")), "--out", s(&out)]));
    assert_eq!(code(&o), 2);
    let junk = dir.path().join("junk.svw");
    std::fs::write(&junk, b"definitely not a weight file").unwrap();
    let o = run(&["eval", "--weights", s(&junk), "--data", s(dir.path()), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn data_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tree(&data);
    let out = dir.path().join("out");
    let o = bin()
        .args(quick(vec!["ingest", "--out", s(&out)]))
        .env("SIAMVERIFY_DATA", &data)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("train.shard").is_file());
    assert!(out.join("validation.shard").is_file());
    assert!(out.join("index.json").is_file());
}

#[test]
fn diverging_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic::write_layout(&synthetic::separable(8, 2, 64, 0), &data).unwrap();
    let out = dir.path().join("out");
    let args = [
        "train", "--data", s(&data), "--out", s(&out), "--lr", "1e30", "--epochs", "3", "--backbone", "compact",
        "--resolution", "64", "--batch-size", "4",
    ];
    let o = run(&args);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn classifier_run_reproduces_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tree(&data);
    let shards = dir.path().join("shards");
    ok(&quick(vec!["ingest", "--data", s(&data), "--out", s(&shards)]));

    let first = dir.path().join("first");
    ok(&quick(vec!["train", "--data", s(&shards), "--out", s(&first)]));
    for f in ["config.toml", "epochs.csv", "metrics.json", "model.svw"] {
        assert!(first.join(f).is_file(), "{f}");
    }
    let csv = String::from_utf8(read(&first.join("epochs.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 2);
    MetricsReport::load(&first.join("metrics.json")).unwrap();

    let second = dir.path().join("second");
    ok(&["train", "--config", s(&first.join("config.toml")), "--out", s(&second)]);
    assert_eq!(read(&first.join("metrics.json")), read(&second.join("metrics.json")));
    assert_eq!(read(&first.join("model.svw")), read(&second.join("model.svw")));
    assert_eq!(read(&first.join("epochs.csv")), read(&second.join("epochs.csv")));

    let raw = dir.path().join("raw");
    ok(&quick(vec!["train", "--data", s(&data), "--out", s(&raw)]));
    assert_eq!(read(&first.join("model.svw")), read(&raw.join("model.svw")), "shards and tree agree");

    let eval = dir.path().join("eval");
    ok(&["eval", "--weights", s(&first.join("model.svw")), "--data", s(&shards), "--resolution", "64", "--out", s(&eval)]);
    assert_eq!(read(&first.join("metrics.json")), read(&eval.join("metrics.json")));
    let o = run(&["eval", "--weights", s(&first.join("model.svw")), "--data", s(&shards), "--out", s(&eval)]);
    assert_eq!(code(&o), 4, "resolution mismatch");
}

#[test]
fn single_vote_matches_reference_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tree(&data);
    let run_dir = dir.path().join("snn");
    ok(&quick(vec!["train", "--variant", "snn-scratch", "--data", s(&data), "--out", s(&run_dir), "--pairs", "reference-anchored"]));
    let model = run_dir.join("model.svw");

    let vote_dir = dir.path().join("vote");
    ok(&["vote", "--weights", s(&model), "--data", s(&data), "--resolution", "64", "--k", "1", "--seed", "11", "--out", s(&vote_dir)]);
    let panel = PanelManifest::load(&vote_dir.join("panel.json")).unwrap();
    assert_eq!(panel.k, 1);

    let eval_dir = dir.path().join("eval");
    ok(&[
        "eval", "--weights", s(&model), "--data", s(&data), "--resolution", "64", "--reference", &panel.ids[0], "--out",
        s(&eval_dir),
    ]);
    assert_eq!(read(&vote_dir.join("metrics.json")), read(&eval_dir.join("metrics.json")));

    let again = dir.path().join("again");
    ok(&[
        "vote", "--weights", s(&model), "--data", s(&data), "--resolution", "64", "--panel",
        s(&vote_dir.join("panel.json")), "--out", s(&again),
    ]);
    assert_eq!(read(&vote_dir.join("votes.json")), read(&again.join("votes.json")));

    let o = run(&["vote", "--weights", s(&model), "--data", s(&data), "--resolution", "64", "--k", "7", "--out", s(&again)]);
    assert_eq!(code(&o), 4, "K larger than the correct training pool");
}

#[test]
fn export_then_import_backbone() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tree(&data);
    let donor = dir.path().join("donor");
    ok(&quick(vec!["train", "--data", s(&data), "--out", s(&donor)]));
    let exported = dir.path().join("exported");
    ok(&["export-weights", "--weights", s(&donor.join("model.svw")), "--out", s(&exported)]);
    let backbone = exported.join("backbone.svw");
    assert!(backbone.is_file());

    let imported = dir.path().join("imported");
    let o = ok(&[
        "import-weights", "--variant", "snn-transfer", "--weights", s(&backbone), "--backbone", "compact",
        "--resolution", "64", "--out", s(&imported),
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("8 frozen layers"));
    assert!(imported.join("model.svw").is_file());

    let o = run(&[
        "import-weights", "--variant", "snn-transfer", "--weights", s(&backbone), "--backbone", "vgg16",
        "--resolution", "64", "--out", s(&imported),
    ]);
    assert_eq!(code(&o), 2, "backbone shape mismatch");

    let transfer = dir.path().join("transfer");
    ok(&quick(vec![
        "train", "--variant", "cnn-transfer", "--weights", s(&backbone), "--data", s(&data), "--out", s(&transfer),
    ]));
}

#[test]
fn augment_preview_writes_original_copies_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.png");
    let ds = synthetic::subclassed(1, 1, 64, 0);
    siamese_verify::data::save_png(&ds.train[0].pixels, &img).unwrap();
    let out = dir.path().join("preview");
    ok(&["augment-preview", "--input", s(&img), "--n", "3", "--resolution", "64", "--seed", "2", "--out", s(&out)]);
    let pngs: Vec<PathBuf> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    assert_eq!(pngs.len(), 5);
    assert!(out.join("grid.png").is_file());
    siamese_verify::data::decode_and_normalize(&out.join("grid.png"), 64).unwrap();

    let same = dir.path().join("identity");
    ok(&["augment-preview", "--input", s(&img), "--n", "2", "--identity", "--resolution", "64", "--out", s(&same)]);
    assert_eq!(read(&same.join("original.png")), read(&same.join("augmented_1.png")));
}

#[test]
fn reingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tree(&data);
    let out = dir.path().join("shards");
    ok(&quick(vec!["ingest", "--data", s(&data), "--out", s(&out)]));
    let first = read(&out.join("train.shard"));
    let index = read(&out.join("index.json"));
    let o = ok(&quick(vec!["ingest", "--data", s(&data), "--out", s(&out)]));
    assert_eq!(first, read(&out.join("train.shard")));
    assert_eq!(index, read(&out.join("index.json")));
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains("train") && summary.contains("correct 6"), "{summary}");
}

#[test]
fn eval_on_edge_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tree(&data);
    let edge = synthetic::subclassed(1, 3, 64, 9);
    for img in edge.validation.iter().filter(|i| i.class == siamese_verify::data::InstallClass::Incorrect) {
        let name = img.id.rsplit('/').next().unwrap();
        let path = data.join(format!("edge-validation/incorrect/{name}.png"));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        siamese_verify::data::save_png(&img.pixels, &path).unwrap();
    }
    let run_dir = dir.path().join("run");
    ok(&quick(vec!["train", "--data", s(&data), "--out", s(&run_dir)]));
    let eval_dir = dir.path().join("edge");
    ok(&[
        "eval", "--weights", s(&run_dir.join("model.svw")), "--data", s(&data), "--resolution", "64", "--split",
        "edge-validation", "--out", s(&eval_dir),
    ]);
    let m = MetricsReport::load(&eval_dir.join("metrics.json")).unwrap();
    assert_eq!(m.counts.total(), 4 + 3, "main validation correct images plus edge incorrect images");
}
