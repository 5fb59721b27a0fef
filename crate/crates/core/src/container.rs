//! Binary container shared by weight files and raw image shards.
//!
//! ```text
//! magic      8 bytes   "SVWFMT\0\n"
//! length     u64 LE    byte length of the manifest
//! manifest   JSON      format version, dtype, metadata, one entry per blob
//! blobs      f32 LE    concatenated in manifest order
//! ```
//!
//! Entry offsets are relative to the start of the blob section. Every blob
//! carries a CRC-32 of its bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SVWFMT\0\n";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryMeta {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    pub kind: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
    pub crc32: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub entries: Vec<EntryMeta>,
}

/// One named array.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub id: String,
    pub layer: Option<String>,
    pub kind: String,
    pub shape: Vec<usize>,
    pub attrs: BTreeMap<String, String>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub meta: BTreeMap<String, serde_json::Value>,
    pub blobs: Vec<Blob>,
}

fn blob_bytes(data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

impl Container {
    pub fn manifest(&self) -> Manifest {
        let mut offset = 0u64;
        let entries = self
            .blobs
            .iter()
            .map(|b| {
                let bytes = blob_bytes(&b.data);
                let e = EntryMeta {
                    id: b.id.clone(),
                    layer: b.layer.clone(),
                    kind: b.kind.clone(),
                    shape: b.shape.clone(),
                    offset,
                    nbytes: bytes.len() as u64,
                    crc32: crc32fast::hash(&bytes),
                    attrs: b.attrs.clone(),
                };
                offset += bytes.len() as u64;
                e
            })
            .collect();
        Manifest {
            format_version: FORMAT_VERSION,
            dtype: DTYPE.to_string(),
            meta: self.meta.clone(),
            entries,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = self.manifest();
        let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        for b in &self.blobs {
            out.extend_from_slice(&blob_bytes(&b.data));
        }
        out
    }

    /// Splits raw bytes into the manifest and the blob section without verifying blobs.
    pub fn split_bytes(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
        if bytes.len() < 16 {
            return Err(Error::Corruption("file shorter than the container header".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Format("not a weight/shard container (bad magic)".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let end = 16usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Corruption("manifest extends past end of file".into()))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes[16..end])
            .map_err(|e| Error::Corruption(format!("unreadable manifest: {e}")))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(Error::Format(format!(
                "unsupported format version {version:?}, expected {FORMAT_VERSION}"
            )));
        }
        let manifest: Manifest = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("invalid manifest: {e}")))?;
        if manifest.dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype `{}`", manifest.dtype)));
        }
        Ok((manifest, &bytes[end..]))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, section) = Self::split_bytes(bytes)?;
        let mut expected_offset = 0u64;
        let mut blobs = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let name = e.layer.clone().unwrap_or_else(|| e.id.clone());
            let count: usize = e.shape.iter().product();
            if count as u64 * 4 != e.nbytes {
                return Err(Error::Load {
                    layer: name,
                    detail: format!(
                        "entry `{}` declares shape {:?} but holds {} bytes",
                        e.id, e.shape, e.nbytes
                    ),
                });
            }
            if e.offset != expected_offset {
                return Err(Error::Corruption(format!(
                    "entry `{}` starts at {} but {} was expected",
                    e.id, e.offset, expected_offset
                )));
            }
            let start = e.offset as usize;
            let stop = start + e.nbytes as usize;
            if stop > section.len() {
                return Err(Error::Corruption(format!(
                    "entry `{}` is truncated ({} of {} bytes present)",
                    e.id,
                    section.len().saturating_sub(start),
                    e.nbytes
                )));
            }
            let raw = &section[start..stop];
            if crc32fast::hash(raw) != e.crc32 {
                return Err(Error::Corruption(format!("checksum mismatch for entry `{}`", e.id)));
            }
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blobs.push(Blob {
                id: e.id.clone(),
                layer: e.layer.clone(),
                kind: e.kind.clone(),
                shape: e.shape.clone(),
                attrs: e.attrs.clone(),
                data,
            });
            expected_offset = stop as u64;
        }
        if expected_offset as usize != section.len() {
            return Err(Error::Corruption(format!(
                "{} trailing bytes after the last entry",
                section.len() - expected_offset as usize
            )));
        }
        Ok(Self {
            meta: manifest.meta,
            blobs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn get(&self, id: &str) -> Option<&Blob> {
        self.blobs.iter().find(|b| b.id == id)
    }
}

/// Rewrites the manifest of serialized container bytes, keeping the blob section.
/// Used by tooling that inspects or patches manifests.
pub fn replace_manifest(bytes: &[u8], manifest: &Manifest) -> Result<Vec<u8>> {
    let (_, section) = Container::split_bytes(bytes)?;
    let body = serde_json::to_vec_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest does not serialize: {e}")))?;
    let mut out = Vec::with_capacity(16 + body.len() + section.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(section);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample() -> Container {
        Container {
            meta: BTreeMap::from([("note".to_string(), serde_json::json!("x"))]),
            blobs: vec![
                Blob {
                    id: "a.kernel".into(),
                    layer: Some("a".into()),
                    kind: "conv".into(),
                    shape: vec![2, 3],
                    attrs: BTreeMap::new(),
                    data: vec![1.0, -2.0, 3.5, 0.0, -0.0, f32::MIN_POSITIVE],
                },
                Blob {
                    id: "b.bias".into(),
                    layer: Some("b".into()),
                    kind: "dense".into(),
                    shape: vec![1],
                    attrs: BTreeMap::from([("trainable".into(), "false".into())]),
                    data: vec![7.25],
                },
            ],
        }
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = sample().to_bytes();
        let err = Container::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Corruption(_)), "{err}");
        let err = Container::from_bytes(&bytes[..20]).unwrap_err();
        assert!(matches!(err, Error::Corruption(_)), "{err}");
    }

    #[test]
    fn flipped_blob_byte_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 2] ^= 0x40;
        let err = Container::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let bytes = sample().to_bytes();
        let (mut m, _) = Container::split_bytes(&bytes).unwrap();
        m.format_version = 2;
        let patched = replace_manifest(&bytes, &m).unwrap();
        assert!(matches!(Container::from_bytes(&patched), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn edited_shape_names_layer() {
        let bytes = sample().to_bytes();
        let (mut m, _) = Container::split_bytes(&bytes).unwrap();
        m.entries[0].shape = vec![4, 3];
        let patched = replace_manifest(&bytes, &m).unwrap();
        match Container::from_bytes(&patched) {
            Err(Error::Load { layer, .. }) => assert_eq!(layer, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(any::<u32>(), 1..64)) {
            let data: Vec<f32> = values.iter().map(|&b| f32::from_bits(b)).collect();
            let c = Container {
                meta: BTreeMap::new(),
                blobs: vec![Blob {
                    id: "x".into(),
                    layer: None,
                    kind: "raw".into(),
                    shape: vec![data.len()],
                    attrs: BTreeMap::new(),
                    data: data.clone(),
                }],
            };
            let back = Container::from_bytes(&c.to_bytes()).unwrap();
            let bits: Vec<u32> = back.blobs[0].data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, values);
        }
    }
}
