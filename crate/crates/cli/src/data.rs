use std::path::{Path, PathBuf};

use siamese_verify::data::{
    load_dataset_index, load_records, read_shard, DatasetIndex, DatasetSplit, LabeledImage, Layout,
};

use crate::error::{CliError, CliResult};

pub const INDEX_FILE: &str = "index.json";

pub fn shard_name(split: DatasetSplit) -> String {
    format!("{}.shard", split.dir_name())
}

/// A dataset root: either a raw image tree or the output of `ingest`.
pub enum DataSource {
    Tree { index: DatasetIndex, resolution: usize },
    Shards { root: PathBuf, resolution: usize },
}

impl DataSource {
    pub fn open(root: &Path, layout: Layout, seed: u64, resolution: usize) -> CliResult<Self> {
        if root.join(INDEX_FILE).is_file() {
            return Ok(DataSource::Shards {
                root: root.to_path_buf(),
                resolution,
            });
        }
        Ok(DataSource::Tree {
            index: load_dataset_index(root, layout, seed)?,
            resolution,
        })
    }

    pub fn has(&self, split: DatasetSplit) -> bool {
        match self {
            DataSource::Tree { index, .. } => index.split(split).is_ok(),
            DataSource::Shards { root, .. } => root.join(shard_name(split)).is_file(),
        }
    }

    pub fn load(&self, split: DatasetSplit) -> CliResult<Vec<LabeledImage>> {
        match self {
            DataSource::Tree { index, resolution } => Ok(load_records(index.split(split)?, *resolution)?),
            DataSource::Shards { root, resolution } => {
                let path = root.join(shard_name(split));
                if !path.is_file() {
                    return Err(siamese_verify::Error::Layout {
                        path,
                        detail: format!("no ingested `{}` split", split.dir_name()),
                    }
                    .into());
                }
                let images = read_shard(&path)?;
                if let Some(img) = images.iter().find(|i| i.pixels.height() != *resolution) {
                    return Err(CliError::Config(format!(
                        "{} holds {}x{} images but the run asks for resolution {}",
                        path.display(),
                        img.pixels.height(),
                        img.pixels.width(),
                        resolution
                    )));
                }
                Ok(images)
            }
        }
    }

    /// Training images that pair with `split`; edge runs without their own
    /// training split fall back to the main one.
    pub fn load_train_for(&self, split: DatasetSplit) -> CliResult<Vec<LabeledImage>> {
        let counterpart = split.train_counterpart();
        if self.has(counterpart) {
            self.load(counterpart)
        } else {
            self.load(DatasetSplit::Train)
        }
    }
}
