use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image_io::decode_and_normalize;
use super::{DatasetSplit, InstallClass, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Bracket,
    OmniglotSubset,
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bracket" => Ok(Self::Bracket),
            "omniglot-subset" => Ok(Self::OmniglotSubset),
            other => Err(format!("unknown layout `{other}` (bracket | omniglot-subset)")),
        }
    }
}

/// Where an image lives and what it is labelled as.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Path relative to the dataset root, `/`-separated.
    pub id: String,
    pub path: PathBuf,
    pub class: InstallClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subclass: Option<String>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub layout: Layout,
    pub seed: u64,
    pub splits: BTreeMap<DatasetSplit, Vec<ImageRecord>>,
    /// Files found in the layout that could not be read as images.
    pub unreadable: Vec<PathBuf>,
}

impl DatasetIndex {
    pub fn split(&self, split: DatasetSplit) -> Result<&[ImageRecord]> {
        self.splits
            .get(&split)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Layout {
                path: self.root.join(split.dir_name()),
                detail: format!("dataset has no `{}` split", split.dir_name()),
            })
    }

    /// Image counts per split and class.
    pub fn counts(&self) -> BTreeMap<DatasetSplit, BTreeMap<InstallClass, usize>> {
        self.splits
            .iter()
            .map(|(s, recs)| {
                let mut m = BTreeMap::new();
                for r in recs {
                    *m.entry(r.class).or_insert(0) += 1;
                }
                (*s, m)
            })
            .collect()
    }

    /// Image counts per split and subclass (`-` when absent).
    pub fn subclass_counts(&self) -> BTreeMap<DatasetSplit, BTreeMap<String, usize>> {
        self.splits
            .iter()
            .map(|(s, recs)| {
                let mut m = BTreeMap::new();
                for r in recs {
                    let key = format!(
                        "{}/{}",
                        r.class.dir_name(),
                        r.subclass.as_deref().unwrap_or("-")
                    );
                    *m.entry(key).or_insert(0) += 1;
                }
                (*s, m)
            })
            .collect()
    }
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn readable(path: &Path) -> bool {
    image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map(|r| r.into_dimensions().is_ok())
        .unwrap_or(false)
}

/// Collects `(file, subclass)` pairs under a class directory: files directly
/// inside it and files one level down, where the subdirectory names the subclass.
fn scan_class(dir: &Path, unreadable: &mut Vec<PathBuf>) -> Result<Vec<(PathBuf, Option<String>)>> {
    let mut out = Vec::new();
    for p in sorted_entries(dir)? {
        if p.is_dir() {
            let sub = p.file_name().unwrap().to_string_lossy().into_owned();
            for f in sorted_entries(&p)? {
                if f.is_file() {
                    if readable(&f) {
                        out.push((f, Some(sub.clone())));
                    } else {
                        unreadable.push(f);
                    }
                }
            }
        } else if p.is_file() {
            if readable(&p) {
                out.push((p, None));
            } else {
                unreadable.push(p);
            }
        }
    }
    Ok(out)
}

fn class_records(
    root: &Path,
    split: DatasetSplit,
    class: InstallClass,
    unreadable: &mut Vec<PathBuf>,
) -> Result<Vec<ImageRecord>> {
    let dir = root.join(split.dir_name()).join(class.dir_name());
    if !dir.is_dir() {
        return Err(Error::Layout {
            path: dir,
            detail: format!("missing `{}` class directory", class.dir_name()),
        });
    }
    let files = scan_class(&dir, unreadable)?;
    if files.is_empty() {
        return Err(Error::EmptyClass(format!(
            "{}/{} contains no readable images",
            split.dir_name(),
            class.dir_name()
        )));
    }
    Ok(files
        .into_iter()
        .map(|(path, subclass)| ImageRecord {
            id: relative_id(root, &path),
            path,
            class,
            subclass,
            split: split.role(),
        })
        .collect())
}

/// Indexes a dataset root. For the bracket layout, `train` and `validation`
/// are required; `edge-train` / `edge-validation` are optional and, when their
/// `correct` directory is absent, reuse the correct images of the main split.
pub fn load_dataset_index(root: &Path, layout: Layout, seed: u64) -> Result<DatasetIndex> {
    match layout {
        Layout::Bracket => load_bracket(root, seed),
        Layout::OmniglotSubset => build_omniglot_subset(root, &["Latin", "Greek"], seed),
    }
}

fn load_bracket(root: &Path, seed: u64) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Layout {
            path: root.to_path_buf(),
            detail: "dataset root is not a directory".into(),
        });
    }
    let mut unreadable = Vec::new();
    let mut splits = BTreeMap::new();
    for split in [DatasetSplit::Train, DatasetSplit::Validation] {
        let dir = root.join(split.dir_name());
        if !dir.is_dir() {
            return Err(Error::Layout {
                path: dir,
                detail: format!("missing `{}` split directory", split.dir_name()),
            });
        }
        let mut recs = Vec::new();
        for class in InstallClass::ALL {
            recs.extend(class_records(root, split, class, &mut unreadable)?);
        }
        splits.insert(split, recs);
    }
    for split in [DatasetSplit::EdgeTrain, DatasetSplit::EdgeValidation] {
        if !root.join(split.dir_name()).is_dir() {
            continue;
        }
        let correct_dir = root.join(split.dir_name()).join("correct");
        let mut recs = if correct_dir.is_dir() {
            class_records(root, split, InstallClass::Correct, &mut unreadable)?
        } else {
            splits[&split.main()]
                .iter()
                .filter(|r: &&ImageRecord| r.class == InstallClass::Correct)
                .cloned()
                .collect()
        };
        recs.extend(class_records(root, split, InstallClass::Incorrect, &mut unreadable)?);
        splits.insert(split, recs);
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        layout: Layout::Bracket,
        seed,
        splits,
        unreadable,
    })
}

/// Two-alphabet verification subset of an Omniglot image tree
/// (`<root>/<alphabet>/<character>/*.png`). The first alphabet takes the
/// `correct` role, the second `incorrect`; characters are subclasses. Within
/// each alphabet 70% of characters (rounded up, leaving at least one) go to
/// training and the rest to validation, so no character is in both splits.
pub fn build_omniglot_subset(root: &Path, alphabets: &[&str], seed: u64) -> Result<DatasetIndex> {
    if alphabets.len() != 2 {
        return Err(Error::Config(format!(
            "alphabet verification needs exactly two alphabets, got {}",
            alphabets.len()
        )));
    }
    let mut unreadable = Vec::new();
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (alphabet, class) in alphabets.iter().zip(InstallClass::ALL) {
        let dir = root.join(alphabet);
        if !dir.is_dir() {
            return Err(Error::Layout {
                path: dir,
                detail: format!("alphabet `{alphabet}` not found"),
            });
        }
        let mut chars: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| p.is_dir()).collect();
        if chars.is_empty() {
            return Err(Error::EmptyClass(format!("alphabet `{alphabet}` has no characters")));
        }
        let mut rng = seed::rng(Stream::Split, seed, class as u64, 0);
        chars.shuffle(&mut rng);
        let n_train = if chars.len() == 1 {
            1
        } else {
            ((chars.len() as f64 * 0.7).ceil() as usize).min(chars.len() - 1)
        };
        let mut found = 0;
        for (k, cdir) in chars.iter().enumerate() {
            let character = cdir.file_name().unwrap().to_string_lossy().into_owned();
            let split = if k < n_train { Split::Train } else { Split::Validation };
            for f in sorted_entries(cdir)?.into_iter().filter(|p| p.is_file()) {
                if !readable(&f) {
                    unreadable.push(f);
                    continue;
                }
                found += 1;
                let rec = ImageRecord {
                    id: relative_id(root, &f),
                    path: f,
                    class,
                    subclass: Some(character.clone()),
                    split,
                };
                match split {
                    Split::Train => train.push(rec),
                    Split::Validation => validation.push(rec),
                }
            }
        }
        if found == 0 {
            return Err(Error::EmptyClass(format!("alphabet `{alphabet}` has no readable images")));
        }
    }
    let sort = |v: &mut Vec<ImageRecord>| v.sort_by(|a, b| (a.class, &a.id).cmp(&(b.class, &b.id)));
    sort(&mut train);
    sort(&mut validation);
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        layout: Layout::OmniglotSubset,
        seed,
        splits: BTreeMap::from([(DatasetSplit::Train, train), (DatasetSplit::Validation, validation)]),
        unreadable,
    })
}

/// Decodes records in parallel; output order follows the input order.
pub fn load_records(records: &[ImageRecord], resolution: usize) -> Result<Vec<LabeledImage>> {
    records
        .par_iter()
        .map(|r| {
            Ok(LabeledImage {
                id: r.id.clone(),
                pixels: decode_and_normalize(&r.path, resolution)?,
                class: r.class,
                subclass: r.subclass.clone(),
                split: r.split,
            })
        })
        .collect()
}
