//! Procedural image sets with known structure, for tests and desk-scale runs.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::image_io::save_png;
use super::{Dataset, Image, InstallClass, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Incorrect-installation variants of [`subclassed`].
pub const DEFECTS: [&str; 5] = ["shifted-left", "shifted-right", "rotated", "missing", "tilted"];

fn noisy_background(size: usize, level: f32, rng: &mut ChaCha8Rng) -> Image {
    let mut img = Image::filled(size, size, level);
    for v in img.data_mut() {
        *v = (*v + rng.gen_range(-0.05..=0.05)).clamp(0.0, 1.0);
    }
    img
}

/// Paints pixels whose centre falls inside a rectangle rotated by `angle` radians.
fn paint_rect(img: &mut Image, cx: f32, cy: f32, half_w: f32, half_h: f32, angle: f32, rgb: [f32; 3]) {
    let (s, c) = angle.sin_cos();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = (x as f32 - cx, y as f32 - cy);
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            if u.abs() <= half_w && v.abs() <= half_h {
                img.set_pixel(y, x, rgb);
            }
        }
    }
}

fn labeled(id: String, pixels: Image, class: InstallClass, subclass: Option<String>, split: Split) -> LabeledImage {
    LabeledImage {
        id,
        pixels,
        class,
        subclass,
        split,
    }
}

/// Bright square (correct) versus dark square (incorrect) on a mid-grey noisy
/// background, at a jittered position.
pub fn separable(train_per_class: usize, val_per_class: usize, size: usize, seed: u64) -> Dataset {
    let make = |split: Split, n: usize| -> Vec<LabeledImage> {
        let tag = matches!(split, Split::Validation) as u64;
        let mut out = Vec::with_capacity(2 * n);
        for class in InstallClass::ALL {
            for i in 0..n {
                let mut rng = seed::rng(Stream::Synthetic, seed, tag * 2 + class as u64, i as u64);
                let mut img = noisy_background(size, 0.5, &mut rng);
                let s = size as f32;
                let half = s * rng.gen_range(0.14..0.20);
                let cx = s / 2.0 + rng.gen_range(-0.15..0.15) * s;
                let cy = s / 2.0 + rng.gen_range(-0.15..0.15) * s;
                let level = match class {
                    InstallClass::Correct => rng.gen_range(0.85..1.0),
                    InstallClass::Incorrect => rng.gen_range(0.0..0.15),
                };
                paint_rect(&mut img, cx, cy, half, half, 0.0, [level; 3]);
                let id = format!("{}/{}/{i:04}", split_name(split), class.dir_name());
                out.push(labeled(id, img, class, None, split));
            }
        }
        out
    };
    Dataset {
        train: make(Split::Train, train_per_class),
        validation: make(Split::Validation, val_per_class),
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
    }
}

/// One rendered scene: two dark tolerance marks and, depending on `defect`,
/// a bright bracket between them (correct) or one of the [`DEFECTS`].
pub fn render_bracket(size: usize, defect: Option<usize>, rng: &mut ChaCha8Rng) -> Image {
    let s = size as f32 / 64.0;
    let mut img = noisy_background(size, rng.gen_range(0.40..0.50), rng);
    let c = (size as f32 - 1.0) / 2.0;
    let (jx, jy) = (rng.gen_range(-4.0..=4.0) * s, rng.gen_range(-4.0..=4.0) * s);
    let mark = [0.08, 0.08, 0.08];
    for dx in [-14.0, 14.0] {
        paint_rect(&mut img, c + dx * s + jx, c + jy, 1.0 * s, 20.0 * s, 0.0, mark);
    }
    let bracket = [rng.gen_range(0.85..=0.95); 3];
    let (bx, by) = (c + jx, c + jy);
    let (hw, hh) = (6.0 * s, 14.0 * s);
    match defect {
        None => paint_rect(&mut img, bx, by, hw, hh, 0.0, bracket),
        Some(0) => paint_rect(&mut img, bx - 22.0 * s, by, hw, hh, 0.0, bracket),
        Some(1) => paint_rect(&mut img, bx + 22.0 * s, by, hw, hh, 0.0, bracket),
        Some(2) => paint_rect(&mut img, bx, by, hh, hw, 0.0, bracket),
        Some(3) => {}
        Some(_) => paint_rect(&mut img, bx, by, hw, hh, std::f32::consts::FRAC_PI_4, bracket),
    }
    img
}

/// Bracket-like scenes whose incorrect class is split evenly over the five
/// [`DEFECTS`] subclasses.
pub fn subclassed(train_per_class: usize, val_per_class: usize, size: usize, seed: u64) -> Dataset {
    let make = |split: Split, n: usize| -> Vec<LabeledImage> {
        let tag = matches!(split, Split::Validation) as u64;
        let mut out = Vec::with_capacity(2 * n);
        for class in InstallClass::ALL {
            for i in 0..n {
                let mut rng = seed::rng(Stream::Synthetic, seed, 10 + tag * 2 + class as u64, i as u64);
                let defect = match class {
                    InstallClass::Correct => None,
                    InstallClass::Incorrect => Some(i % DEFECTS.len()),
                };
                let img = render_bracket(size, defect, &mut rng);
                let sub = defect.map(|d| DEFECTS[d].to_string());
                let id = match &sub {
                    Some(d) => format!("{}/{}/{d}/{i:04}", split_name(split), class.dir_name()),
                    None => format!("{}/{}/{i:04}", split_name(split), class.dir_name()),
                };
                out.push(labeled(id, img, class, sub, split));
            }
        }
        out
    };
    Dataset {
        train: make(Split::Train, train_per_class),
        validation: make(Split::Validation, val_per_class),
    }
}

/// Writes a dataset as PNG files in the on-disk bracket layout, using each
/// image id (`<split>/<class>/[<subclass>/]<name>`) as its relative path.
pub fn write_layout(dataset: &Dataset, root: &Path) -> Result<()> {
    for img in dataset.train.iter().chain(&dataset.validation) {
        let path = root.join(format!("{}.png", img.id));
        let dir = path
            .parent()
            .ok_or_else(|| Error::Contract(format!("image id `{}` has no directory", img.id)))?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_png(&img.pixels, &path)?;
    }
    Ok(())
}
