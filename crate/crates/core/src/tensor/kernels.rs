//! Raw forward/backward loops behind the tape operations.
//!
//! Convolution accumulates every output element in `(ki, kj, c)` order starting
//! from zero and adds the bias last, so results match a naive nested-loop
//! evaluation bit for bit. Batch-level parallelism only splits work along axes
//! whose partial results are never summed across threads.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub f: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Input row/col for output position `(oy, ox)` and kernel tap `(ki, kj)`,
    /// or `None` when the tap lands in padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki) as isize - self.pad_top as isize;
        let x = (ox * self.stride + kj) as isize - self.pad_left as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }

    fn in_sample(&self) -> usize {
        self.h * self.w * self.c
    }

    fn out_sample(&self) -> usize {
        self.oh * self.ow * self.f
    }
}

pub fn conv2d_forward(g: &ConvGeom, x: &[f32], k: &[f32], b: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; g.n * g.out_sample()];
    out.par_chunks_mut(g.out_sample().max(1))
        .zip(x.par_chunks(g.in_sample()))
        .for_each(|(o, xs)| {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let orow = &mut o[(oy * g.ow + ox) * g.f..(oy * g.ow + ox + 1) * g.f];
                    for ki in 0..g.kh {
                        for kj in 0..g.kw {
                            let Some((y, xx)) = g.source(oy, ox, ki, kj) else {
                                continue;
                            };
                            let xin = &xs[(y * g.w + xx) * g.c..(y * g.w + xx + 1) * g.c];
                            let kbase = (ki * g.kw + kj) * g.c * g.f;
                            for (ci, &a) in xin.iter().enumerate() {
                                let krow = &k[kbase + ci * g.f..kbase + (ci + 1) * g.f];
                                for (acc, &wv) in orow.iter_mut().zip(krow) {
                                    *acc += a * wv;
                                }
                            }
                        }
                    }
                    for (acc, &bv) in orow.iter_mut().zip(b) {
                        *acc += bv;
                    }
                }
            }
        });
    out
}

/// Returns `(d_input, d_kernel, d_bias)`; each is computed only when requested.
pub fn conv2d_backward(
    g: &ConvGeom,
    x: &[f32],
    k: &[f32],
    dout: &[f32],
    want_dx: bool,
    want_dk: bool,
    want_db: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>, Option<Vec<f32>>) {
    let dx = want_dx.then(|| {
        let mut dx = vec![0.0f32; g.n * g.in_sample()];
        dx.par_chunks_mut(g.in_sample())
            .zip(dout.par_chunks(g.out_sample()))
            .for_each(|(dxs, ds)| {
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let drow = &ds[(oy * g.ow + ox) * g.f..(oy * g.ow + ox + 1) * g.f];
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let Some((y, xx)) = g.source(oy, ox, ki, kj) else {
                                    continue;
                                };
                                let kbase = (ki * g.kw + kj) * g.c * g.f;
                                let dxin =
                                    &mut dxs[(y * g.w + xx) * g.c..(y * g.w + xx + 1) * g.c];
                                for (ci, dv) in dxin.iter_mut().enumerate() {
                                    let krow = &k[kbase + ci * g.f..kbase + (ci + 1) * g.f];
                                    *dv += dot(drow, krow);
                                }
                            }
                        }
                    }
                }
            });
        dx
    });

    let dk = want_dk.then(|| {
        let tap = g.c * g.f;
        let mut dk = vec![0.0f32; g.kh * g.kw * tap];
        // one task per kernel tap; each sums over (n, oy, ox) in a fixed order
        dk.par_chunks_mut(tap).enumerate().for_each(|(t, dks)| {
            let (ki, kj) = (t / g.kw, t % g.kw);
            for n in 0..g.n {
                let xs = &x[n * g.in_sample()..(n + 1) * g.in_sample()];
                let ds = &dout[n * g.out_sample()..(n + 1) * g.out_sample()];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let Some((y, xx)) = g.source(oy, ox, ki, kj) else {
                            continue;
                        };
                        let xin = &xs[(y * g.w + xx) * g.c..(y * g.w + xx + 1) * g.c];
                        let drow = &ds[(oy * g.ow + ox) * g.f..(oy * g.ow + ox + 1) * g.f];
                        for (ci, &a) in xin.iter().enumerate() {
                            let row = &mut dks[ci * g.f..(ci + 1) * g.f];
                            for (acc, &d) in row.iter_mut().zip(drow) {
                                *acc += a * d;
                            }
                        }
                    }
                }
            }
        });
        dk
    });

    let db = want_db.then(|| {
        let mut db = vec![0.0f32; g.f];
        for row in dout.chunks(g.f) {
            for (acc, &d) in db.iter_mut().zip(row) {
                *acc += d;
            }
        }
        db
    });

    (dx, dk, db)
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 2×2 max pooling with stride 2 (floor mode). Returns output and, for every
/// output element, the flat input index of the winning element (first on ties).
pub fn maxpool_forward(
    x: &[f32],
    n: usize,
    h: usize,
    w: usize,
    c: usize,
) -> (Vec<f32>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let i = ((s * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                            if best_i == usize::MAX || x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    (out, arg)
}

pub fn dense_forward(x: &[f32], w: &[f32], b: &[f32], n: usize, d: usize, u: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; n * u];
    for (row, xs) in out.chunks_mut(u).zip(x.chunks(d)) {
        for (di, &a) in xs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wrow = &w[di * u..(di + 1) * u];
            for (acc, &wv) in row.iter_mut().zip(wrow) {
                *acc += a * wv;
            }
        }
        for (acc, &bv) in row.iter_mut().zip(b) {
            *acc += bv;
        }
    }
    out
}

/// Per-channel batch statistics for a `[M, C]` view (M = N·H·W), variance with denominator M.
pub fn channel_stats(x: &[f32], c: usize) -> (Vec<f32>, Vec<f32>) {
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0f64; c];
    for row in x.chunks(c) {
        for (acc, &v) in mean.iter_mut().zip(row) {
            *acc += v as f64;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0f64; c];
    for row in x.chunks(c) {
        for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v as f64 - mu;
            *acc += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    (
        mean.into_iter().map(|v| v as f32).collect(),
        var.into_iter().map(|v| v as f32).collect(),
    )
}
