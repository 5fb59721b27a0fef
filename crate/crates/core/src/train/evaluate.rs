use crate::data::{to_batch, InstallClass, LabeledImage};
use crate::error::{Error, Result};
use crate::model::{ForwardCtx, ModelGraph};

use super::metrics::{ConfusionCounts, MetricsReport};

const EVAL_CHUNK: usize = 32;

/// Inference-mode classifier scores, one per image.
pub fn classifier_scores(graph: &ModelGraph, images: &[LabeledImage]) -> Result<Vec<f32>> {
    let mut scores = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let batch = to_batch(&chunk.iter().map(|i| &i.pixels).collect::<Vec<_>>())?;
        scores.extend(graph.forward_classifier(&batch, &mut ForwardCtx::infer())?);
    }
    Ok(scores)
}

/// Predicted class for a classifier score: correct only strictly above the threshold.
pub fn classifier_decision(score: f32, threshold: f32) -> InstallClass {
    if score > threshold {
        InstallClass::Correct
    } else {
        InstallClass::Incorrect
    }
}

/// Predicted class for a similarity to a correct reference: correct at or above the threshold.
pub fn similarity_decision(score: f32, threshold: f32) -> InstallClass {
    if score >= threshold {
        InstallClass::Correct
    } else {
        InstallClass::Incorrect
    }
}

pub fn evaluate_classifier(graph: &ModelGraph, images: &[LabeledImage], threshold: f32) -> Result<MetricsReport> {
    if images.is_empty() {
        return Err(Error::EmptyClass("evaluation split is empty".into()));
    }
    let scores = classifier_scores(graph, images)?;
    let mut counts = ConfusionCounts::default();
    for (img, &s) in images.iter().zip(&scores) {
        counts.record(img.class, classifier_decision(s, threshold));
    }
    MetricsReport::from_counts(counts)
}

/// Similarity of every image to one reference, computed pair by pair through both towers.
pub fn reference_scores(graph: &ModelGraph, reference: &LabeledImage, images: &[LabeledImage]) -> Result<Vec<f32>> {
    let mut scores = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let refs = vec![&reference.pixels; chunk.len()];
        let a = to_batch(&refs)?;
        let b = to_batch(&chunk.iter().map(|i| &i.pixels).collect::<Vec<_>>())?;
        scores.extend(graph.forward_snn(&a, &b, &mut ForwardCtx::infer())?);
    }
    Ok(scores)
}

/// Pairs each image with a correct-class reference; similarity below the
/// threshold predicts "incorrectly installed".
pub fn evaluate_snn(
    graph: &ModelGraph,
    reference: &LabeledImage,
    images: &[LabeledImage],
    threshold: f32,
) -> Result<MetricsReport> {
    if reference.class != InstallClass::Correct {
        return Err(Error::Contract(format!(
            "reference `{}` is not a correct-class image",
            reference.id
        )));
    }
    if images.is_empty() {
        return Err(Error::EmptyClass("evaluation split is empty".into()));
    }
    let scores = reference_scores(graph, reference, images)?;
    let mut counts = ConfusionCounts::default();
    for (img, &s) in images.iter().zip(&scores) {
        counts.record(img.class, similarity_decision(s, threshold));
    }
    MetricsReport::from_counts(counts)
}
