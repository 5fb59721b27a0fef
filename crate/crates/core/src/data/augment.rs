use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Image, LabeledImage};
use crate::seed::SeedTuple;

/// How pixels that map from outside the source frame are filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum FillMode {
    /// Replicate the nearest edge pixel.
    Nearest,
    Constant(f32),
}

/// Ranges for random augmentation. Every range is symmetric around the identity
/// and sampled uniformly. Cropping is not part of the policy and never happens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPolicy {
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f32,
    /// Maximum absolute shift as a fraction of width / height.
    pub translate_frac: f32,
    /// Zoom factor drawn from `[1 - zoom_frac, 1 + zoom_frac]`.
    pub zoom_frac: f32,
    /// Horizontal shear factor drawn from `[-shear_frac, shear_frac]`.
    pub shear_frac: f32,
    pub brightness: (f32, f32),
    pub hflip: bool,
    pub vflip: bool,
    pub fill: FillMode,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            rotation_deg: 40.0,
            translate_frac: 0.10,
            zoom_frac: 0.20,
            shear_frac: 0.20,
            brightness: (0.70, 1.30),
            hflip: true,
            vflip: true,
            fill: FillMode::Nearest,
        }
    }
}

impl AugmentationPolicy {
    /// A policy whose every sample is the identity transform.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            translate_frac: 0.0,
            zoom_frac: 0.0,
            shear_frac: 0.0,
            brightness: (1.0, 1.0),
            hflip: false,
            vflip: false,
            fill: FillMode::Nearest,
        }
    }
}

/// One concrete draw from a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f32,
    pub translate_x: f32,
    pub translate_y: f32,
    pub zoom: f32,
    pub shear: f32,
    pub brightness: f32,
    pub hflip: bool,
    pub vflip: bool,
}

impl AugmentParams {
    pub fn is_identity(&self) -> bool {
        self.rotation_deg == 0.0
            && self.translate_x == 0.0
            && self.translate_y == 0.0
            && self.zoom == 1.0
            && self.shear == 0.0
            && self.brightness == 1.0
            && !self.hflip
            && !self.vflip
    }
}

pub fn sample_params(policy: &AugmentationPolicy, seed: SeedTuple) -> AugmentParams {
    let mut rng = seed.rng();
    let sym = |rng: &mut rand_chacha::ChaCha8Rng, r: f32| rng.gen_range(-r.abs()..=r.abs());
    let rotation_deg = sym(&mut rng, policy.rotation_deg);
    let translate_x = sym(&mut rng, policy.translate_frac);
    let translate_y = sym(&mut rng, policy.translate_frac);
    let zoom = 1.0 + sym(&mut rng, policy.zoom_frac);
    let shear = sym(&mut rng, policy.shear_frac);
    let (lo, hi) = policy.brightness;
    let brightness = rng.gen_range(lo.min(hi)..=hi.max(lo));
    let hflip = rng.gen_bool(0.5) && policy.hflip;
    let vflip = rng.gen_bool(0.5) && policy.vflip;
    AugmentParams {
        rotation_deg,
        translate_x,
        translate_y,
        zoom,
        shear,
        brightness,
        hflip,
        vflip,
    }
}

/// Applies rotation, shear, zoom and translation (in that order, about the
/// image centre) in one bilinear resample, then flips, then brightness.
pub fn apply_params(img: &Image, p: &AugmentParams, fill: FillMode) -> Image {
    if p.is_identity() {
        return img.clone();
    }
    let (h, w) = (img.height(), img.width());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let th = (p.rotation_deg as f64).to_radians();
    let (s, c) = th.sin_cos();
    let z = p.zoom as f64;
    let sh = p.shear as f64;
    // forward A = Z · S · R
    let a = [z * (c + sh * s), z * (-s + sh * c), z * s, z * c];
    let det = a[0] * a[3] - a[1] * a[2];
    let inv = [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det];
    let (tx, ty) = (p.translate_x as f64 * w as f64, p.translate_y as f64 * h as f64);

    let tap = |y: isize, x: isize| -> [f32; 3] {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            return img.pixel(y as usize, x as usize);
        }
        match fill {
            FillMode::Nearest => img.pixel(y.clamp(0, h as isize - 1) as usize, x.clamp(0, w as isize - 1) as usize),
            FillMode::Constant(v) => [v; 3],
        }
    };

    let mut out = Image::filled(h, w, 0.0);
    for oy in 0..h {
        for ox in 0..w {
            let qx = if p.hflip { w - 1 - ox } else { ox } as f64;
            let qy = if p.vflip { h - 1 - oy } else { oy } as f64;
            let (dx, dy) = (qx - cx - tx, qy - cy - ty);
            let sx = inv[0] * dx + inv[1] * dy + cx;
            let sy = inv[2] * dx + inv[3] * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let p00 = tap(y0, x0);
            let p01 = tap(y0, x0 + 1);
            let p10 = tap(y0 + 1, x0);
            let p11 = tap(y0 + 1, x0 + 1);
            let mut rgb = [0.0f32; 3];
            for ch in 0..3 {
                let top = p00[ch] * (1.0 - fx) + p01[ch] * fx;
                let bot = p10[ch] * (1.0 - fx) + p11[ch] * fx;
                rgb[ch] = ((top * (1.0 - fy) + bot * fy) * p.brightness).clamp(0.0, 1.0);
            }
            out.set_pixel(oy, ox, rgb);
        }
    }
    out
}

/// Augments one image; the result depends only on the image, the policy and the seed tuple.
pub fn augment(image: &LabeledImage, policy: &AugmentationPolicy, seed: SeedTuple) -> LabeledImage {
    let params = sample_params(policy, seed);
    LabeledImage {
        pixels: apply_params(&image.pixels, &params, policy.fill),
        ..image.clone()
    }
}
