//! Independent reference implementations that the engine is checked against.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siamese_verify::data::InstallClass;
use siamese_verify::tensor::{Padding, Tape, Tensor, Var};
use siamese_verify::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so kinks sit outside the finite-difference step.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1f32..1.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub type Build<'a> = &'a dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

/// Reduces any output to a scalar through a fixed random linear map.
fn project(tape: &mut Tape, out: Var, w: &Tensor) -> Result<Var> {
    let n = tape.value(out).len();
    let flat = tape.reshape(out, vec![1, n])?;
    let wv = tape.constant(w.clone())?;
    let b = tape.constant(Tensor::zeros(vec![1]))?;
    let d = tape.dense(flat, wv, b)?;
    tape.sum(d)
}

fn loss_and_grads(inputs: &[Tensor], build: Build, w: &Tensor) -> (f64, Vec<Vec<f32>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)).unwrap())
        .collect();
    let out = build(&mut tape, &vars).unwrap();
    let l = project(&mut tape, out, w).unwrap();
    tape.backward(l).unwrap();
    let grads = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
        .collect();
    (tape.value(l).data()[0] as f64, grads)
}

fn loss_only(inputs: &[Tensor], build: Build, w: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    let l = project(&mut tape, out, w).unwrap();
    tape.value(l).data()[0] as f64
}

/// Largest norm-wise relative error between analytic and extrapolated central-difference
/// gradients over every input of `build`.
pub fn gradcheck(inputs: &[Tensor], build: Build, seed: u64, eps: f32) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    let n = tape.value(out).len();
    let w = random_tensor(&mut rng(seed), &[n, 1], -1.0, 1.0);
    let (_, analytic) = loss_and_grads(inputs, build, &w);
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = Vec::with_capacity(input.len());
        for j in 0..input.len() {
            let central = |h: f32| {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += h;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= h;
                (loss_only(&plus, build, &w) - loss_only(&minus, build, &w)) / (2.0 * h as f64)
            };
            // Richardson step cancels the O(h^2) truncation term.
            numeric.push((4.0 * central(eps / 2.0) - central(eps)) / 3.0);
        }
        let diff: f64 = analytic[i].iter().zip(&numeric).map(|(&a, &n)| (a as f64 - n).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic[i].iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let scale = na.max(nn);
        if scale > 1e-6 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

/// Quadruple-loop convolution over NHWC input and `[kh,kw,C,F]` kernels.
/// "Same" padding splits the total padding with the extra row/column after.
pub fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Tensor {
    let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (kh, kw, f) = (k.shape()[0], k.shape()[1], k.shape()[3]);
    let (oh, ow, pt, pl) = match padding {
        Padding::Valid => ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0),
        Padding::Same => {
            let oh = h.div_ceil(stride);
            let ow = w.div_ceil(stride);
            let ph = ((oh - 1) * stride + kh).saturating_sub(h);
            let pw = ((ow - 1) * stride + kw).saturating_sub(w);
            (oh, ow, ph / 2, pw / 2)
        }
    };
    let xd = x.data();
    let kd = k.data();
    let mut out = vec![0.0f32; n * oh * ow * f];
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for fo in 0..f {
                    let mut acc = 0.0f32;
                    for i in 0..kh {
                        for j in 0..kw {
                            let y = (oy * stride + i) as isize - pt as isize;
                            let xx = (ox * stride + j) as isize - pl as isize;
                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                continue;
                            }
                            for ci in 0..c {
                                let xv = xd[((s * h + y as usize) * w + xx as usize) * c + ci];
                                let kv = kd[((i * kw + j) * c + ci) * f + fo];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((s * oh + oy) * ow + ox) * f + fo] = acc + b.data()[fo];
                }
            }
        }
    }
    Tensor::new(vec![n, oh, ow, f], out).unwrap()
}

/// Metrics by direct counting, with "incorrectly installed" as the positive class.
pub struct BruteMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn brute_metrics(actual: &[InstallClass], predicted: &[InstallClass]) -> BruteMetrics {
    let pos = InstallClass::Incorrect;
    let mut tp = 0u64;
    let mut pred_pos = 0u64;
    let mut act_pos = 0u64;
    let mut agree = 0u64;
    for (&a, &p) in actual.iter().zip(predicted) {
        if a == p {
            agree += 1;
        }
        if p == pos {
            pred_pos += 1;
        }
        if a == pos {
            act_pos += 1;
        }
        if a == pos && p == pos {
            tp += 1;
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    BruteMetrics {
        accuracy: ratio(agree, actual.len() as u64),
        precision: ratio(tp, pred_pos),
        recall: ratio(tp, act_pos),
    }
}

/// Majority by enumeration: correct iff "same" votes strictly outnumber "different" votes.
pub fn brute_majority(decisions: &[bool]) -> InstallClass {
    let same = decisions.iter().filter(|&&d| d).count();
    let different = decisions.len() - same;
    if same > different {
        InstallClass::Correct
    } else {
        InstallClass::Incorrect
    }
}

/// Parameter count of a sequential conv backbone with batchnorm after every
/// convolution, a dense feature layer, and a head of `head_params` parameters.
pub fn closed_form_params(
    input: usize,
    blocks: &[(usize, usize)],
    kernel: usize,
    feature_units: usize,
    head_params: usize,
) -> usize {
    let mut channels = 3;
    let mut side = input;
    let mut total = 0;
    for &(filters, convs) in blocks {
        for _ in 0..convs {
            total += kernel * kernel * channels * filters + filters;
            total += 2 * filters;
            channels = filters;
        }
        side /= 2;
    }
    let flat = side * side * channels;
    total + flat * feature_units + feature_units + head_params
}
