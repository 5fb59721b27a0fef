//! Network construction: the baseline classifier and the Siamese network,
//! parameter initialisation, layer freezing and weight files.

mod graph;
mod layers;
mod transfer;
mod weights;

pub use graph::{
    build_baseline_cnn, build_snn, CnnConfig, FeatureVector, ForwardCtx, ModelGraph, ModelSpec, SnnConfig,
    SUPPORTED_INPUT_SIZES,
};
pub use layers::{BackboneConfig, ConvBlock, HeadMode, LayerKind, LayerSpec};
pub use transfer::{apply_transfer, FreezePolicy};
pub use weights::{load_weights, save_weights, WeightFile, MOVING_MEAN, MOVING_VARIANCE};

/// Classifier decision: "correctly installed" iff the score is strictly above 0.5.
pub fn classifier_says_correct(score: f32) -> bool {
    score > 0.5
}
