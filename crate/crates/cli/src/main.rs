//! Command-line front end: ingest data, train, evaluate, vote and manage weight files.

mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use siamese_verify::data::{DatasetSplit, Layout, PairRegime};
use siamese_verify::model::{FreezePolicy, HeadMode};

use config::{RunConfig, Variant};
use error::{CliResult, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "siamverify", version, about = "Verify component installation with Siamese and baseline CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Index a dataset tree, decode every image and write one shard per split.
    Ingest(Overrides),
    /// Train a model, then evaluate it on the configured split.
    Train(Overrides),
    /// Evaluate a saved model on a split.
    Eval {
        #[command(flatten)]
        o: Overrides,
        /// Reference image id for Siamese models (default: drawn from the training split by seed).
        #[arg(long)]
        reference: Option<String>,
    },
    /// Evaluate a saved Siamese model by majority vote over K reference images.
    Vote {
        #[command(flatten)]
        o: Overrides,
        /// Reuse a panel manifest written by an earlier run.
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Write an image next to N augmented copies of it, plus a grid of all of them.
    AugmentPreview {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Use the identity policy instead of the configured one.
        #[arg(long)]
        identity: bool,
    },
    /// Write the convolutional backbone of a saved model to `<out>/backbone.svw`.
    ExportWeights(Overrides),
    /// Build a transfer model from a backbone file and write it to `<out>/model.svw`.
    ImportWeights(Overrides),
}

/// Settings that override the config file; the config file overrides defaults.
#[derive(Debug, Clone, Default, Args)]
struct Overrides {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root (falls back to the config file, then SIAMVERIFY_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    layout: Option<Layout>,
    /// cnn-scratch | snn-scratch | cnn-transfer | snn-transfer | snn-voting
    #[arg(long)]
    variant: Option<Variant>,
    /// scalar-l1 | weighted-l1
    #[arg(long)]
    head: Option<HeadMode>,
    /// vgg16 | compact
    #[arg(long)]
    backbone: Option<String>,
    /// none | all-but-last-block | backbone
    #[arg(long)]
    freeze: Option<FreezePolicy>,
    /// random | reference-anchored
    #[arg(long)]
    pairs: Option<PairRegime>,
    #[arg(long)]
    pairs_per_epoch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input side length: 64, 128 or 256.
    #[arg(long)]
    resolution: Option<usize>,
    /// Reference panel size for voting.
    #[arg(long)]
    k: Option<usize>,
    /// Evaluation split: train | validation | edge-train | edge-validation.
    #[arg(long)]
    split: Option<DatasetSplit>,
    /// Weight file: a backbone for transfer training, a full model for eval and vote.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable training-time augmentation.
    #[arg(long)]
    no_augment: bool,
}

impl Overrides {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field.clone() {
                    c.$($target)+ = v;
                }
            };
        }
        if let Some(d) = &self.data {
            c.data_root = Some(d.clone());
        }
        if let Some(w) = &self.weights {
            c.weights = Some(w.clone());
        }
        if self.pairs_per_epoch.is_some() {
            c.train.pairs_per_epoch = self.pairs_per_epoch;
        }
        if self.no_augment {
            c.train.augment = false;
        }
        set!(layout => layout);
        set!(variant => variant);
        set!(head => head);
        set!(backbone => backbone);
        set!(freeze => freeze);
        set!(k => k);
        set!(split => split);
        set!(out => out);
        set!(pairs => train.pair_regime);
        set!(epochs => train.epochs);
        set!(batch_size => train.batch_size);
        set!(lr => train.lr);
        set!(threshold => train.threshold);
        set!(seed => train.seed);
        set!(resolution => train.resolution);
        c.train.transfer = c.variant.needs_weights() || (c.variant == Variant::SnnVoting && c.weights.is_some());
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(o) => commands::ingest(&o.resolve()?),
        Command::Train(o) => commands::train(&o.resolve()?),
        Command::Eval { o, reference } => commands::eval(&o.resolve()?, reference.as_deref()),
        Command::Vote { o, panel } => commands::vote(&o.resolve()?, panel.as_deref()),
        Command::AugmentPreview { o, input, n, identity } => {
            commands::augment_preview(&o.resolve()?, &input, n, identity)
        }
        Command::ExportWeights(o) => commands::export_weights(&o.resolve()?),
        Command::ImportWeights(o) => commands::import_weights(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

