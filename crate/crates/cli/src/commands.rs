use std::path::{Path, PathBuf};

use serde::Serialize;
use siamese_verify::data::{
    decode_and_normalize, load_dataset_index, load_records, sample_params, apply_params, save_png, save_png_grid,
    write_shard, AugmentationPolicy, Image, LabeledImage,
};
use siamese_verify::model::{
    apply_transfer, build_baseline_cnn, build_snn, load_weights, save_weights, CnnConfig, ModelGraph, SnnConfig,
    WeightFile,
};
use siamese_verify::seed::SeedTuple;
use siamese_verify::train::{
    evaluate_classifier, evaluate_snn, export_epoch_log, train_classifier, train_snn, val_acc_std, MetricsReport,
};
use siamese_verify::voting::{select_reference_panel, vote_evaluate_with, PanelManifest, ReferencePanel, SnnPanelScorer};
use siamese_verify::Error;

use crate::config::{RunConfig, Variant};
use crate::data::{shard_name, DataSource, INDEX_FILE};
use crate::error::{CliError, CliResult};

pub const MODEL_FILE: &str = "model.svw";
pub const BACKBONE_FILE: &str = "backbone.svw";
pub const METRICS_FILE: &str = "metrics.json";
pub const PANEL_FILE: &str = "panel.json";
pub const VOTES_FILE: &str = "votes.json";
pub const EPOCH_LOG_FILE: &str = "epochs.csv";

fn prepare_out(cfg: &RunConfig) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    cfg.write_snapshot(&cfg.out)?;
    Ok(cfg.out.clone())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn open_data(cfg: &RunConfig) -> CliResult<DataSource> {
    DataSource::open(&cfg.data_root()?, cfg.layout, cfg.train.seed, cfg.train.resolution)
}

fn input_shape(cfg: &RunConfig) -> [usize; 3] {
    [cfg.train.resolution, cfg.train.resolution, 3]
}

fn load_model(cfg: &RunConfig) -> CliResult<ModelGraph> {
    let path = cfg
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Config("a model file is required (--weights)".into()))?;
    let graph = ModelGraph::from_weight_file(&load_weights(path)?)?;
    let [h, _, _] = graph.input_shape();
    if h != cfg.train.resolution {
        return Err(CliError::Config(format!(
            "{} was trained at resolution {h}, not {}",
            path.display(),
            cfg.train.resolution
        )));
    }
    Ok(graph)
}

/// Builds the graph a variant trains, importing backbone weights where it asks for them.
pub fn build_graph(cfg: &RunConfig) -> CliResult<ModelGraph> {
    let backbone = cfg.backbone_config()?;
    let seed = cfg.train.seed;
    let transfer = cfg.train.transfer;
    let graph = if cfg.variant.is_siamese() {
        let base = if transfer { SnnConfig::transfer() } else { SnnConfig::default() };
        build_snn(
            input_shape(cfg),
            &SnnConfig {
                backbone,
                head: cfg.head,
                init_seed: seed,
                ..base
            },
        )?
    } else {
        let base = if transfer { CnnConfig::transfer() } else { CnnConfig::default() };
        build_baseline_cnn(
            input_shape(cfg),
            &CnnConfig {
                backbone,
                init_seed: seed,
                ..base
            },
        )?
    };
    if !transfer {
        return Ok(graph);
    }
    let path = cfg
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Config("transfer needs a backbone weight file (--weights)".into()))?;
    Ok(apply_transfer(graph, &load_weights(path)?, cfg.freeze)?)
}

pub fn ingest(cfg: &RunConfig) -> CliResult<()> {
    let root = cfg.data_root()?;
    let index = load_dataset_index(&root, cfg.layout, cfg.train.seed)?;
    let out = prepare_out(cfg)?;
    for (split, records) in &index.splits {
        let images = load_records(records, cfg.train.resolution)?;
        write_shard(&images, &out.join(shard_name(*split)))?;
    }
    write_json(&index, &out.join(INDEX_FILE))?;
    for (split, counts) in index.counts() {
        let parts: Vec<String> = counts.iter().map(|(c, n)| format!("{} {n}", c.dir_name())).collect();
        println!("{:<16} {}", split.dir_name(), parts.join("  "));
    }
    for path in &index.unreadable {
        println!("unreadable: {}", path.display());
    }
    println!("{} unreadable files; shards written to {}", index.unreadable.len(), out.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    if cfg.variant.needs_weights() && cfg.weights.is_none() {
        return Err(CliError::Config(format!("{:?} needs a backbone weight file (--weights)", cfg.variant)));
    }
    let source = open_data(cfg)?;
    let train = source.load_train_for(cfg.split)?;
    let eval = source.load(cfg.split)?;
    let mut graph = build_graph(cfg)?;
    let out = prepare_out(cfg)?;
    let logs = if graph.is_siamese() {
        train_snn(&mut graph, &train, &eval, &cfg.train)?
    } else {
        train_classifier(&mut graph, &train, &eval, &cfg.train)?
    };
    for l in &logs {
        println!(
            "epoch {:>3}  loss {:.4}  train_acc {:.4}  val_acc {:.4}",
            l.epoch, l.train_loss, l.train_acc, l.val_acc
        );
    }
    export_epoch_log(&logs, &out.join(EPOCH_LOG_FILE))?;
    if let Some(s) = val_acc_std(&logs, 5) {
        println!("val_acc std over last 5 epochs: {s:.4}");
    }
    save_weights(&graph, &out.join(MODEL_FILE))?;
    let report = if cfg.variant == Variant::SnnVoting {
        let panel = select_reference_panel(&train, cfg.k, cfg.train.seed)?;
        vote_report(cfg, &graph, &panel, &eval, &out)?
    } else {
        single_report(cfg, &graph, &train, &eval, None, &out)?
    };
    println!("{report}");
    Ok(())
}

fn single_report(
    cfg: &RunConfig,
    graph: &ModelGraph,
    train: &[LabeledImage],
    eval: &[LabeledImage],
    reference: Option<&str>,
    out: &Path,
) -> CliResult<MetricsReport> {
    let report = if graph.is_siamese() {
        let reference = match reference {
            Some(id) => train
                .iter()
                .chain(eval)
                .find(|i| i.id == id)
                .cloned()
                .ok_or_else(|| CliError::Config(format!("reference image `{id}` is not in the dataset")))?,
            None => select_reference_panel(train, 1, cfg.train.seed)?.members.remove(0),
        };
        println!("reference: {}", reference.id);
        evaluate_snn(graph, &reference, eval, cfg.train.threshold)?
    } else {
        evaluate_classifier(graph, eval, cfg.train.threshold)?
    };
    report.save(&out.join(METRICS_FILE))?;
    Ok(report)
}

fn vote_report(
    cfg: &RunConfig,
    graph: &ModelGraph,
    panel: &ReferencePanel,
    eval: &[LabeledImage],
    out: &Path,
) -> CliResult<MetricsReport> {
    let manifest = panel.manifest();
    manifest.save(&out.join(PANEL_FILE))?;
    println!("panel (K = {}): {}", manifest.k, manifest.ids.join(", "));
    let scorer = SnnPanelScorer::new(graph, panel)?;
    let (report, votes) = vote_evaluate_with(&scorer, eval, cfg.train.threshold)?;
    #[derive(Serialize)]
    struct Row<'a> {
        id: &'a str,
        #[serde(flatten)]
        vote: &'a siamese_verify::voting::VoteResult,
    }
    let rows: Vec<Row> = eval.iter().zip(&votes).map(|(i, v)| Row { id: &i.id, vote: v }).collect();
    write_json(&rows, &out.join(VOTES_FILE))?;
    report.save(&out.join(METRICS_FILE))?;
    Ok(report)
}

pub fn eval(cfg: &RunConfig, reference: Option<&str>) -> CliResult<()> {
    let graph = load_model(cfg)?;
    let source = open_data(cfg)?;
    let train = if graph.is_siamese() { source.load_train_for(cfg.split)? } else { Vec::new() };
    let eval = source.load(cfg.split)?;
    let out = prepare_out(cfg)?;
    let report = single_report(cfg, &graph, &train, &eval, reference, &out)?;
    println!("{report}");
    Ok(())
}

pub fn vote(cfg: &RunConfig, panel_path: Option<&Path>) -> CliResult<()> {
    let graph = load_model(cfg)?;
    if !graph.is_siamese() {
        return Err(CliError::Config("voting needs a Siamese model".into()));
    }
    let source = open_data(cfg)?;
    let train = source.load_train_for(cfg.split)?;
    let eval = source.load(cfg.split)?;
    let panel = match panel_path {
        Some(p) => ReferencePanel::from_manifest(&PanelManifest::load(p)?, &train)?,
        None => select_reference_panel(&train, cfg.k, cfg.train.seed)?,
    };
    let out = prepare_out(cfg)?;
    let report = vote_report(cfg, &graph, &panel, &eval, &out)?;
    println!("{report}");
    Ok(())
}

pub fn augment_preview(cfg: &RunConfig, input: &Path, n: usize, identity: bool) -> CliResult<()> {
    let original = decode_and_normalize(input, cfg.train.resolution)?;
    let policy = if identity { AugmentationPolicy::identity() } else { cfg.train.augmentation };
    let out = prepare_out(cfg)?;
    let mut all: Vec<Image> = vec![original.clone()];
    save_png(&original, &out.join("original.png"))?;
    for i in 1..=n {
        let params = sample_params(&policy, SeedTuple::new(cfg.train.seed, 0, i as u64));
        let img = apply_params(&original, &params, policy.fill);
        save_png(&img, &out.join(format!("augmented_{i}.png")))?;
        all.push(img);
    }
    save_png_grid(&all, &out.join("grid.png"))?;
    println!("wrote {} images and grid.png to {}", all.len(), out.display());
    Ok(())
}

pub fn export_weights(cfg: &RunConfig) -> CliResult<()> {
    let path = cfg
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Config("a model file is required (--weights)".into()))?;
    let graph = ModelGraph::from_weight_file(&load_weights(path)?)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let target = cfg.out.join(BACKBONE_FILE);
    let wf = WeightFile::backbone_of(&graph);
    wf.save(&target)?;
    println!("wrote {} backbone arrays to {}", wf.layer_ids().len(), target.display());
    Ok(())
}

pub fn import_weights(cfg: &RunConfig) -> CliResult<()> {
    if cfg.weights.is_none() {
        return Err(CliError::Config("a backbone weight file is required (--weights)".into()));
    }
    let mut transfer_cfg = cfg.clone();
    transfer_cfg.train.transfer = true;
    let graph = build_graph(&transfer_cfg)?;
    let out = prepare_out(&transfer_cfg)?;
    let target = out.join(MODEL_FILE);
    save_weights(&graph, &target)?;
    let frozen = graph.layers().filter(|l| l.has_params() && !l.trainable).count();
    println!(
        "wrote {} ({} parameters, {} trainable, {frozen} frozen layers)",
        target.display(),
        graph.param_count(),
        graph.trainable_param_count()
    );
    Ok(())
}
