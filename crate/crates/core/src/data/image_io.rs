use std::io::Cursor;
use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat, ImageReader, Rgb32FImage, RgbImage};

use super::Image;
use crate::error::{Error, Result};

fn decode_err(path: &Path, detail: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// Decodes PNG or JPEG, scales pixels to `[0, 1]` and resizes to
/// `resolution × resolution` with bilinear (triangle) filtering.
pub fn decode_and_normalize(path: &Path, resolution: usize) -> Result<Image> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| decode_err(path, e))?;
    from_dynamic(decoded, resolution)
}

pub(crate) fn from_dynamic(img: DynamicImage, resolution: usize) -> Result<Image> {
    let mut rgb: Rgb32FImage = img.to_rgb32f();
    let r = resolution as u32;
    if rgb.width() != r || rgb.height() != r {
        rgb = image::imageops::resize(&rgb, r, r, FilterType::Triangle);
    }
    let data = rgb.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Image::new(resolution, resolution, data)
}

fn to_rgb8(img: &Image) -> RgbImage {
    let raw = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions")
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_rgb8(img)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}

/// Lays images out left to right, separated by a 2-pixel white gutter.
pub fn save_png_grid(images: &[Image], path: &Path) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::Contract("empty image grid".into()))?;
    let (h, w) = (first.height(), first.width());
    let gap = 2;
    let total_w = images.len() * w + (images.len() - 1) * gap;
    let mut grid = Image::filled(h, total_w, 1.0);
    for (k, img) in images.iter().enumerate() {
        if img.height() != h || img.width() != w {
            return Err(Error::dim("image grid", "images differ in size"));
        }
        for y in 0..h {
            for x in 0..w {
                grid.set_pixel(y, k * (w + gap) + x, img.pixel(y, x));
            }
        }
    }
    save_png(&grid, path)
}
