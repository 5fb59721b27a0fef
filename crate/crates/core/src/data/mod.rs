//! Dataset indexing, decoding, augmentation, pair sampling and raw shards.

mod augment;
mod image_io;
mod index;
mod pairs;
mod shards;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use augment::{apply_params, augment, sample_params, AugmentParams, AugmentationPolicy, FillMode};
pub use image_io::{decode_and_normalize, encode_png, save_png, save_png_grid};
pub use index::{build_omniglot_subset, load_dataset_index, load_records, DatasetIndex, ImageRecord, Layout};
pub use pairs::{sample_pairs, sample_random_pairs, sample_reference_anchored_pairs, PairBalance, PairRegime, PairSample};
pub use shards::{read_shard, write_shard};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Installation label. Classifier targets use 1 for `Correct`; metrics treat
/// `Incorrect` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstallClass {
    Correct,
    Incorrect,
}

impl InstallClass {
    pub const ALL: [InstallClass; 2] = [InstallClass::Correct, InstallClass::Incorrect];

    pub fn dir_name(self) -> &'static str {
        match self {
            InstallClass::Correct => "correct",
            InstallClass::Incorrect => "incorrect",
        }
    }

    pub fn other(self) -> Self {
        match self {
            InstallClass::Correct => InstallClass::Incorrect,
            InstallClass::Incorrect => InstallClass::Correct,
        }
    }

    /// Classifier target: 1 for correct, 0 for incorrect.
    pub fn target(self) -> f32 {
        match self {
            InstallClass::Correct => 1.0,
            InstallClass::Incorrect => 0.0,
        }
    }
}

/// Role an image plays during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Top-level directory of the on-disk bracket layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSplit {
    Train,
    Validation,
    EdgeTrain,
    EdgeValidation,
}

impl DatasetSplit {
    pub const ALL: [DatasetSplit; 4] = [
        DatasetSplit::Train,
        DatasetSplit::Validation,
        DatasetSplit::EdgeTrain,
        DatasetSplit::EdgeValidation,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetSplit::Train => "train",
            DatasetSplit::Validation => "validation",
            DatasetSplit::EdgeTrain => "edge-train",
            DatasetSplit::EdgeValidation => "edge-validation",
        }
    }

    pub fn role(self) -> Split {
        match self {
            DatasetSplit::Train | DatasetSplit::EdgeTrain => Split::Train,
            DatasetSplit::Validation | DatasetSplit::EdgeValidation => Split::Validation,
        }
    }

    /// The main split whose correct images an edge split falls back to.
    pub fn main(self) -> DatasetSplit {
        match self.role() {
            Split::Train => DatasetSplit::Train,
            Split::Validation => DatasetSplit::Validation,
        }
    }

    /// Matching training split for panels and training runs.
    pub fn train_counterpart(self) -> DatasetSplit {
        match self {
            DatasetSplit::EdgeTrain | DatasetSplit::EdgeValidation => DatasetSplit::EdgeTrain,
            _ => DatasetSplit::Train,
        }
    }
}

impl std::str::FromStr for DatasetSplit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        DatasetSplit::ALL
            .into_iter()
            .find(|d| d.dir_name() == s)
            .ok_or_else(|| format!("unknown split `{s}` (train | validation | edge-train | edge-validation)"))
    }
}

/// RGB image, `[H, W, 3]` row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(Error::dim(
                "image",
                format!("{} values for a {height}x{width}x3 image", data.len()),
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// A decoded image with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub pixels: Image,
    pub class: InstallClass,
    pub subclass: Option<String>,
    pub split: Split,
}

/// Anything carrying an installation class; lets samplers work on records,
/// decoded images, or plain test fixtures.
pub trait Labeled {
    fn class(&self) -> InstallClass;
}

impl Labeled for LabeledImage {
    fn class(&self) -> InstallClass {
        self.class
    }
}

impl Labeled for ImageRecord {
    fn class(&self) -> InstallClass {
        self.class
    }
}

impl Labeled for InstallClass {
    fn class(&self) -> InstallClass {
        *self
    }
}

/// Decoded training and validation images for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledImage>,
    pub validation: Vec<LabeledImage>,
}

/// Stacks images of one size into an `[N, H, W, 3]` batch.
pub fn to_batch(images: &[&Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Contract("cannot batch zero images".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for img in images {
        if img.height != h || img.width != w {
            return Err(Error::dim(
                "batch",
                format!("{}x{} image in a {h}x{w} batch", img.height, img.width),
            ));
        }
        data.extend_from_slice(&img.data);
    }
    Tensor::new(vec![images.len(), h, w, 3], data)
}

pub fn indices_of<T: Labeled>(pool: &[T], class: InstallClass) -> Vec<usize> {
    pool.iter()
        .enumerate()
        .filter(|(_, t)| t.class() == class)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests;
