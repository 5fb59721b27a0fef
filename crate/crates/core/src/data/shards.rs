use std::collections::BTreeMap;
use std::path::Path;

use super::{Image, InstallClass, LabeledImage, Split};
use crate::container::{Blob, Container};
use crate::error::{Error, Result};

/// Writes decoded images as one container: a `[H, W, 3]` blob per image, labels in attributes.
pub fn write_shard(images: &[LabeledImage], path: &Path) -> Result<()> {
    shard_container(images).save(path)
}

pub(crate) fn shard_container(images: &[LabeledImage]) -> Container {
    let blobs = images
        .iter()
        .map(|img| {
            let mut attrs = BTreeMap::from([
                ("class".to_string(), img.class.dir_name().to_string()),
                (
                    "split".to_string(),
                    match img.split {
                        Split::Train => "train",
                        Split::Validation => "validation",
                    }
                    .to_string(),
                ),
            ]);
            if let Some(s) = &img.subclass {
                attrs.insert("subclass".into(), s.clone());
            }
            Blob {
                id: img.id.clone(),
                layer: None,
                kind: "image".into(),
                shape: vec![img.pixels.height(), img.pixels.width(), 3],
                attrs,
                data: img.pixels.data().to_vec(),
            }
        })
        .collect();
    Container {
        meta: BTreeMap::from([("content".to_string(), serde_json::json!("images"))]),
        blobs,
    }
}

pub fn read_shard(path: &Path) -> Result<Vec<LabeledImage>> {
    parse_shard(&Container::load(path)?)
}

pub(crate) fn parse_shard(c: &Container) -> Result<Vec<LabeledImage>> {
    c.blobs
        .iter()
        .map(|b| {
            let bad = |detail: String| Error::Format(format!("shard entry `{}`: {detail}", b.id));
            if b.kind != "image" || b.shape.len() != 3 || b.shape[2] != 3 {
                return Err(bad(format!("not an RGB image blob (kind {}, shape {:?})", b.kind, b.shape)));
            }
            let class = match b.attrs.get("class").map(String::as_str) {
                Some("correct") => InstallClass::Correct,
                Some("incorrect") => InstallClass::Incorrect,
                other => return Err(bad(format!("class {other:?}"))),
            };
            let split = match b.attrs.get("split").map(String::as_str) {
                Some("train") => Split::Train,
                Some("validation") => Split::Validation,
                other => return Err(bad(format!("split {other:?}"))),
            };
            Ok(LabeledImage {
                id: b.id.clone(),
                pixels: Image::new(b.shape[0], b.shape[1], b.data.clone())?,
                class,
                subclass: b.attrs.get("subclass").cloned(),
                split,
            })
        })
        .collect()
}
