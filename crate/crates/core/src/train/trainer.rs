use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{augment, sample_pairs, to_batch, LabeledImage, PairSample};
use crate::error::{Error, Result};
use crate::model::{ForwardCtx, ModelGraph};
use crate::seed::{self, SeedTuple, Stream};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor};

use super::config::TrainConfig;
use super::evaluate::{classifier_decision, evaluate_classifier};
use super::log::EpochLog;

fn augmented_batch(images: &[(&LabeledImage, u64)], config: &TrainConfig, epoch: u64) -> Result<Tensor> {
    let pixels: Vec<_> = images
        .par_iter()
        .map(|(img, index)| {
            if config.augment {
                augment(img, &config.augmentation, SeedTuple::new(config.seed, epoch, *index)).pixels
            } else {
                img.pixels.clone()
            }
        })
        .collect();
    to_batch(&pixels.iter().collect::<Vec<_>>())
}

fn recalibrate(graph: &mut ModelGraph, train: &[LabeledImage], config: &TrainConfig) -> Result<()> {
    if !config.recalibrate_batchnorm {
        return Ok(());
    }
    let batches = train
        .chunks(32)
        .map(|c| to_batch(&c.iter().map(|i| &i.pixels).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    graph.recalibrate_batchnorm(&batches.iter().collect::<Vec<_>>())
}

struct Step {
    loss: f64,
    logits: Vec<f32>,
}

fn optimize(
    graph: &mut ModelGraph,
    adam: &mut Adam,
    tape: &mut Tape,
    logits: crate::tensor::Var,
    targets: &[f32],
    ctx: ForwardCtx,
    epoch: usize,
    step: usize,
) -> Result<Step> {
    let abort = |detail: String| Error::NumericalAbort { epoch, step, detail };
    let loss = tape.bce_with_logits(logits, targets).map_err(|e| abort(e.to_string()))?;
    let loss_value = tape.value(loss).data()[0];
    if !loss_value.is_finite() {
        return Err(abort(format!("loss is {loss_value}")));
    }
    tape.backward(loss).map_err(|e| match e {
        Error::NonFinite(d) => abort(d),
        other => other,
    })?;
    graph.params_mut().accumulate_grads(tape)?;
    adam.step(graph.params_mut())?;
    if graph.params().iter().any(|p| !p.tensor.all_finite()) {
        return Err(abort("parameters became non-finite".into()));
    }
    graph.commit(ctx);
    Ok(Step {
        loss: loss_value as f64,
        logits: tape.value(logits).data().to_vec(),
    })
}

fn nonfinite_to_abort(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(detail) => Error::NumericalAbort { epoch, step, detail },
        other => other,
    }
}

fn sigmoid(z: f32) -> f32 {
    crate::tensor::sigmoid_score(z)
}

/// Trains the baseline classifier with BCE on `P(correct)`.
pub fn train_classifier(
    graph: &mut ModelGraph,
    train: &[LabeledImage],
    validation: &[LabeledImage],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if graph.is_siamese() {
        return Err(Error::Contract("train_classifier needs a classifier graph".into()));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyClass("training and validation sets must be non-empty".into()));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(Stream::Shuffle, config.seed, e, 0));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let items: Vec<(&LabeledImage, u64)> = chunk.iter().map(|&i| (&train[i], i as u64)).collect();
            let batch = augmented_batch(&items, config, e)?;
            let targets: Vec<f32> = chunk.iter().map(|&i| train[i].class.target()).collect();
            let mut tape = Tape::new();
            let x = tape.constant(batch)?;
            let mut ctx = ForwardCtx::train(seed::rng(Stream::Dropout, config.seed, e, step as u64));
            let z = graph
                .classifier_logits(&mut tape, x, &mut ctx)
                .map_err(|err| nonfinite_to_abort(err, epoch, step))?;
            let out = optimize(graph, &mut adam, &mut tape, z, &targets, ctx, epoch, step)?;
            loss_sum += out.loss * chunk.len() as f64;
            correct += chunk
                .iter()
                .zip(&out.logits)
                .filter(|(&i, &z)| classifier_decision(sigmoid(z), config.threshold) == train[i].class)
                .count();
        }
        recalibrate(graph, train, config)?;
        let val = evaluate_classifier(graph, validation, config.threshold)?;
        logs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc: val.accuracy,
            seconds: if config.record_timing { started.elapsed().as_secs_f64() } else { 0.0 },
        });
    }
    Ok(logs)
}

/// Fraction of pairs whose similarity decision (score at or above the threshold
/// means "same") matches the pair label.
pub fn pair_accuracy(
    graph: &ModelGraph,
    images: &[LabeledImage],
    pairs: &[PairSample],
    threshold: f32,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("no pairs to score".into()));
    }
    let mut features = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        let batch = to_batch(&chunk.iter().map(|i| &i.pixels).collect::<Vec<_>>())?;
        features.push(graph.embed_batch(&batch)?);
    }
    let d = graph.feature_width();
    let rows: Vec<&[f32]> = features.iter().flat_map(|t| t.data().chunks(d)).collect();
    let gather = |idx: &mut dyn Iterator<Item = usize>| -> Result<Tensor> {
        let data: Vec<f32> = idx.flat_map(|i| rows[i].iter().copied()).collect();
        Tensor::new(vec![data.len() / d, d], data)
    };
    let p = gather(&mut pairs.iter().map(|s| s.a))?;
    let q = gather(&mut pairs.iter().map(|s| s.b))?;
    let scores = graph.similarity_from_features(&p, &q)?;
    let hits = pairs
        .iter()
        .zip(&scores)
        .filter(|(s, &score)| (score >= threshold) == s.same)
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// The fixed validation pairs a Siamese run is logged against.
pub fn validation_pairs(validation: &[LabeledImage], config: &TrainConfig) -> Result<Vec<PairSample>> {
    sample_pairs(
        validation,
        config.validation_pairs,
        config.pair_regime,
        config.pair_balance,
        &mut seed::rng(Stream::ValidationPairs, config.seed, 0, 0),
    )
}

/// Trains a Siamese graph on image pairs with BCE on similarity (1 = same class).
pub fn train_snn(
    graph: &mut ModelGraph,
    train: &[LabeledImage],
    validation: &[LabeledImage],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if !graph.is_siamese() {
        return Err(Error::Contract("train_snn needs a Siamese graph".into()));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyClass("training and validation sets must be non-empty".into()));
    }
    let val_pairs = validation_pairs(validation, config)?;
    let n_pairs = config.pairs_per_epoch.unwrap_or(train.len());
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let e = epoch as u64;
        let pairs = sample_pairs(
            train,
            n_pairs,
            config.pair_regime,
            config.pair_balance,
            &mut seed::rng(Stream::Pairs, config.seed, e, 0),
        )?;
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (step, chunk) in pairs.chunks(config.batch_size).enumerate() {
            let base = (step * config.batch_size) as u64;
            let side = |pick: fn(&PairSample) -> usize, offset: u64| -> Vec<(&LabeledImage, u64)> {
                chunk
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (&train[pick(p)], 2 * (base + k as u64) + offset))
                    .collect()
            };
            let a = augmented_batch(&side(|p| p.a, 0), config, e)?;
            let b = augmented_batch(&side(|p| p.b, 1), config, e)?;
            let targets: Vec<f32> = chunk.iter().map(PairSample::target).collect();
            let mut tape = Tape::new();
            let (xa, xb) = (tape.constant(a)?, tape.constant(b)?);
            let mut ctx = ForwardCtx::train(seed::rng(Stream::Dropout, config.seed, e, step as u64));
            let z = graph
                .snn_logits(&mut tape, xa, xb, &mut ctx)
                .map_err(|err| nonfinite_to_abort(err, epoch, step))?;
            let out = optimize(graph, &mut adam, &mut tape, z, &targets, ctx, epoch, step)?;
            loss_sum += out.loss * chunk.len() as f64;
            correct += chunk
                .iter()
                .zip(&out.logits)
                .filter(|(p, &z)| (sigmoid(z) >= config.threshold) == p.same)
                .count();
        }
        recalibrate(graph, train, config)?;
        let val_acc = pair_accuracy(graph, validation, &val_pairs, config.threshold)?;
        logs.push(EpochLog {
            epoch,
            train_loss: loss_sum / pairs.len() as f64,
            train_acc: correct as f64 / pairs.len() as f64,
            val_acc,
            seconds: if config.record_timing { started.elapsed().as_secs_f64() } else { 0.0 },
        });
    }
    Ok(logs)
}
