use serde::{Deserialize, Serialize};

use crate::data::{AugmentationPolicy, PairBalance, PairRegime};
use crate::error::{Error, Result};
use crate::model::SUPPORTED_INPUT_SIZES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub threshold: f32,
    pub pair_regime: PairRegime,
    pub pair_balance: PairBalance,
    pub transfer: bool,
    pub seed: u64,
    pub resolution: usize,
    /// Augment training images (validation images are never augmented).
    pub augment: bool,
    pub augmentation: AugmentationPolicy,
    /// Training pairs per epoch for Siamese runs; defaults to the training-set size.
    pub pairs_per_epoch: Option<usize>,
    /// Size of the fixed validation pair set used for Siamese epoch logs.
    pub validation_pairs: usize,
    /// Re-estimate batchnorm statistics on the un-augmented training images,
    /// with dropout off, at the end of every epoch.
    pub recalibrate_batchnorm: bool,
    /// Fill the `seconds` column with wall-clock time (otherwise 0, keeping logs reproducible).
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_size: 16,
            lr: 1e-4,
            threshold: 0.5,
            pair_regime: PairRegime::Random,
            pair_balance: PairBalance::Stratified,
            transfer: false,
            seed: 0,
            resolution: 256,
            augment: true,
            augmentation: AugmentationPolicy::default(),
            pairs_per_epoch: None,
            validation_pairs: 200,
            recalibrate_batchnorm: true,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return fail(format!("epochs must be at least 1, got {}", self.epochs));
        }
        if self.batch_size < 1 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("learning rate {} is not a non-negative number", self.lr));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if !SUPPORTED_INPUT_SIZES.contains(&self.resolution) {
            return fail(format!(
                "resolution {} not in {SUPPORTED_INPUT_SIZES:?}",
                self.resolution
            ));
        }
        if self.pairs_per_epoch == Some(0) || self.validation_pairs == 0 {
            return fail("pair counts must be positive".into());
        }
        let (lo, hi) = self.augmentation.brightness;
        if !(lo > 0.0 && lo <= hi) {
            return fail(format!("brightness range ({lo}, {hi}) is not a positive interval"));
        }
        Ok(())
    }
}
