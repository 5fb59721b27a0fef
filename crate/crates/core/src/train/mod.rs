//! Training loops, evaluation and metrics.

mod config;
mod evaluate;
mod log;
mod metrics;
mod trainer;

pub use config::TrainConfig;
pub use evaluate::{
    classifier_decision, classifier_scores, evaluate_classifier, evaluate_snn, reference_scores, similarity_decision,
};
pub use log::{export_epoch_log, format_epoch_log, parse_epoch_log, val_acc_std, EpochLog, EPOCH_LOG_HEADER};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use trainer::{pair_accuracy, train_classifier, train_snn, validation_pairs};

#[cfg(test)]
mod tests;
