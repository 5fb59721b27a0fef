use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{indices_of, InstallClass, Labeled};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Which training pairs a Siamese run sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRegime {
    /// Both images drawn from the whole pool.
    #[default]
    Random,
    /// The first image is always a correct-class reference.
    ReferenceAnchored,
}

impl std::str::FromStr for PairRegime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "reference-anchored" => Ok(Self::ReferenceAnchored),
            other => Err(format!("unknown pair regime `{other}` (random | reference-anchored)")),
        }
    }
}

/// How the same/different label mix is controlled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairBalance {
    /// Exactly half of the pairs are same-class (the extra pair of an odd count is a coin flip).
    #[default]
    Stratified,
    /// No control: images drawn uniformly, label follows.
    Uniform,
}

/// Indices into the sampled pool plus the derived label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

impl PairSample {
    fn new<T: Labeled>(pool: &[T], a: usize, b: usize) -> Self {
        Self {
            a,
            b,
            same: pool[a].class() == pool[b].class(),
        }
    }

    /// Similarity target: 1 for same class.
    pub fn target(&self) -> f32 {
        if self.same {
            1.0
        } else {
            0.0
        }
    }
}

fn same_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut same_count = n / 2;
    if n % 2 == 1 && rng.gen_bool(0.5) {
        same_count += 1;
    }
    let mut labels: Vec<bool> = (0..n).map(|i| i < same_count).collect();
    labels.shuffle(rng);
    labels
}

/// Picks an index from `from`, avoiding `avoid` when another choice exists.
fn pick_other(from: &[usize], avoid: usize, rng: &mut ChaCha8Rng) -> usize {
    if from.len() < 2 {
        return from[0];
    }
    loop {
        let c = from[rng.gen_range(0..from.len())];
        if c != avoid {
            return c;
        }
    }
}

fn pick(from: &[usize], rng: &mut ChaCha8Rng) -> usize {
    from[rng.gen_range(0..from.len())]
}

/// Pairs drawn from the whole pool. With stratified balance, half the pairs
/// take two distinct images of one class (class chosen uniformly among
/// non-empty classes) and half take one image of each class in random order.
/// A pool with a single class yields only same-class pairs.
pub fn sample_random_pairs<T: Labeled>(pool: &[T], n: usize, seed: u64, balance: PairBalance) -> Result<Vec<PairSample>> {
    sample_random_with(pool, n, &mut seed::rng(Stream::Pairs, seed, 0, 0), balance)
}

pub(crate) fn sample_random_with<T: Labeled>(
    pool: &[T],
    n: usize,
    rng: &mut ChaCha8Rng,
    balance: PairBalance,
) -> Result<Vec<PairSample>> {
    if pool.is_empty() {
        return Err(Error::EmptyClass("cannot sample pairs from an empty pool".into()));
    }
    let by_class: Vec<Vec<usize>> = InstallClass::ALL.iter().map(|&c| indices_of(pool, c)).collect();
    let present: Vec<usize> = (0..2).filter(|&k| !by_class[k].is_empty()).collect();
    if balance == PairBalance::Uniform {
        return Ok((0..n)
            .map(|_| {
                let a = rng.gen_range(0..pool.len());
                let b = rng.gen_range(0..pool.len());
                PairSample::new(pool, a, b)
            })
            .collect());
    }
    let labels = same_labels(n, rng);
    Ok(labels
        .into_iter()
        .map(|same| {
            if same || present.len() < 2 {
                let k = present[rng.gen_range(0..present.len())];
                let a = pick(&by_class[k], rng);
                let b = pick_other(&by_class[k], a, rng);
                PairSample::new(pool, a, b)
            } else {
                let first = rng.gen_range(0..2);
                let a = pick(&by_class[first], rng);
                let b = pick(&by_class[1 - first], rng);
                PairSample::new(pool, a, b)
            }
        })
        .collect())
}

/// Pairs whose first image is always of the correct class. The second image is
/// correct (a different image when possible) or incorrect, balanced 50/50 when
/// stratified. Without incorrect images every pair is same-class.
pub fn sample_reference_anchored_pairs<T: Labeled>(
    pool: &[T],
    n: usize,
    seed: u64,
    balance: PairBalance,
) -> Result<Vec<PairSample>> {
    sample_anchored_with(pool, n, &mut seed::rng(Stream::Pairs, seed, 0, 0), balance)
}

pub(crate) fn sample_anchored_with<T: Labeled>(
    pool: &[T],
    n: usize,
    rng: &mut ChaCha8Rng,
    balance: PairBalance,
) -> Result<Vec<PairSample>> {
    let correct = indices_of(pool, InstallClass::Correct);
    let incorrect = indices_of(pool, InstallClass::Incorrect);
    if correct.is_empty() {
        return Err(Error::EmptyClass("reference-anchored pairs need correct-class images".into()));
    }
    let labels: Vec<bool> = match balance {
        PairBalance::Stratified => same_labels(n, rng),
        PairBalance::Uniform => Vec::new(),
    };
    let all: Vec<usize> = (0..pool.len()).collect();
    Ok((0..n)
        .map(|i| {
            let a = pick(&correct, rng);
            let b = match balance {
                PairBalance::Stratified if labels[i] || incorrect.is_empty() => pick_other(&correct, a, rng),
                PairBalance::Stratified => pick(&incorrect, rng),
                PairBalance::Uniform => pick_other(&all, a, rng),
            };
            PairSample::new(pool, a, b)
        })
        .collect())
}

/// Dispatches on the regime.
pub fn sample_pairs<T: Labeled>(
    pool: &[T],
    n: usize,
    regime: PairRegime,
    balance: PairBalance,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PairSample>> {
    match regime {
        PairRegime::Random => sample_random_with(pool, n, rng, balance),
        PairRegime::ReferenceAnchored => sample_anchored_with(pool, n, rng, balance),
    }
}
