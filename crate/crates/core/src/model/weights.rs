use std::collections::BTreeMap;
use std::path::Path;

use super::graph::{ModelGraph, ModelSpec};
use crate::container::{Blob, Container};
use crate::error::{Error, Result};
use crate::tensor::{ParamKind, RunningStats, Tensor};

pub const MOVING_MEAN: &str = "moving_mean";
pub const MOVING_VARIANCE: &str = "moving_variance";

const META_MODEL: &str = "model";
const META_INPUT: &str = "input_shape";

fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Conv => "conv",
        ParamKind::BatchNorm => "batchnorm",
        ParamKind::Dense => "dense",
        ParamKind::L1Head => "l1-head",
    }
}

/// Named parameter arrays in the portable container format.
///
/// A file written from a whole graph also records the architecture, so the
/// graph can be rebuilt from it; a backbone export carries only arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub container: Container,
}

impl WeightFile {
    pub fn from_graph(graph: &ModelGraph) -> Self {
        let mut wf = Self::arrays(graph, |_| true);
        wf.container.meta.insert(
            META_MODEL.into(),
            serde_json::to_value(graph.spec()).expect("model spec serializes"),
        );
        wf.container
            .meta
            .insert(META_INPUT.into(), serde_json::json!(graph.input_shape()));
        wf
    }

    /// Only the convolutional backbone layers (conv kernels/biases and batchnorm).
    pub fn backbone_of(graph: &ModelGraph) -> Self {
        let backbone: Vec<String> = graph
            .layers()
            .filter(|l| l.block.is_some())
            .map(|l| l.id.clone())
            .collect();
        Self::arrays(graph, |layer| backbone.iter().any(|b| b == layer))
    }

    fn arrays(graph: &ModelGraph, keep: impl Fn(&str) -> bool) -> Self {
        let mut blobs = Vec::new();
        for p in graph.params().iter().filter(|p| keep(&p.layer)) {
            blobs.push(Blob {
                id: p.key(),
                layer: Some(p.layer.clone()),
                kind: kind_name(p.kind).into(),
                shape: p.tensor.shape().to_vec(),
                attrs: BTreeMap::from([("trainable".into(), p.trainable.to_string())]),
                data: p.tensor.data().to_vec(),
            });
            if p.kind == ParamKind::BatchNorm && p.name == "beta" {
                let stats = graph.running_stats().get(&p.layer);
                if let Some(RunningStats {
                    mean: Some(m),
                    var: Some(v),
                }) = stats
                {
                    for (name, data) in [(MOVING_MEAN, m), (MOVING_VARIANCE, v)] {
                        blobs.push(Blob {
                            id: format!("{}.{name}", p.layer),
                            layer: Some(p.layer.clone()),
                            kind: "batchnorm".into(),
                            shape: vec![data.len()],
                            attrs: BTreeMap::new(),
                            data: data.clone(),
                        });
                    }
                }
            }
        }
        Self {
            container: Container {
                meta: BTreeMap::new(),
                blobs,
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.container.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self {
            container: Container::from_bytes(bytes)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.container.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self {
            container: Container::load(path)?,
        })
    }

    /// The recorded architecture, if the file came from a whole graph.
    pub fn model_spec(&self) -> Result<Option<(ModelSpec, [usize; 3])>> {
        let (Some(spec), Some(shape)) = (
            self.container.meta.get(META_MODEL),
            self.container.meta.get(META_INPUT),
        ) else {
            return Ok(None);
        };
        let spec = serde_json::from_value(spec.clone())
            .map_err(|e| Error::Format(format!("unreadable model description: {e}")))?;
        let shape = serde_json::from_value(shape.clone())
            .map_err(|e| Error::Format(format!("unreadable input shape: {e}")))?;
        Ok(Some((spec, shape)))
    }

    pub fn get(&self, layer: &str, name: &str) -> Option<&Blob> {
        self.container.get(&format!("{layer}.{name}"))
    }

    /// Distinct layer ids in file order.
    pub fn layer_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for b in &self.container.blobs {
            let l = b.layer.clone().unwrap_or_else(|| b.id.clone());
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }
}

pub fn save_weights(graph: &ModelGraph, path: &Path) -> Result<WeightFile> {
    let wf = WeightFile::from_graph(graph);
    wf.save(path)?;
    Ok(wf)
}

pub fn load_weights(path: &Path) -> Result<WeightFile> {
    WeightFile::load(path)
}

pub(crate) fn check_shape(blob: &Blob, layer: &str, expected: &[usize]) -> Result<()> {
    if blob.shape != expected {
        return Err(Error::Load {
            layer: layer.to_string(),
            detail: format!(
                "`{}` has shape {:?}, graph expects {:?}",
                blob.id, blob.shape, expected
            ),
        });
    }
    Ok(())
}

pub(crate) fn running_pair<'a>(wf: &'a WeightFile, layer: &str, channels: usize) -> Result<Option<(&'a Blob, &'a Blob)>> {
    match (wf.get(layer, MOVING_MEAN), wf.get(layer, MOVING_VARIANCE)) {
        (None, None) => Ok(None),
        (Some(m), Some(v)) => {
            check_shape(m, layer, &[channels])?;
            check_shape(v, layer, &[channels])?;
            Ok(Some((m, v)))
        }
        _ => Err(Error::Load {
            layer: layer.to_string(),
            detail: "running mean and variance must be stored together".into(),
        }),
    }
}

impl ModelGraph {
    /// Rebuilds a graph from a whole-graph weight file. Every array must be
    /// present with the expected shape, and no unknown arrays are accepted.
    pub fn from_weight_file(wf: &WeightFile) -> Result<Self> {
        let (spec, shape) = wf
            .model_spec()?
            .ok_or_else(|| Error::Format("weight file does not describe a model".into()))?;
        let mut graph = ModelGraph::build(spec, shape)?;
        graph.restore(wf)?;
        Ok(graph)
    }

    /// Strictly replaces all parameters, trainable flags and running statistics.
    pub fn restore(&mut self, wf: &WeightFile) -> Result<()> {
        let mut staged: Vec<(String, Vec<f32>, bool)> = Vec::new();
        let mut known = std::collections::BTreeSet::new();
        for p in self.params().iter() {
            let key = p.key();
            let blob = wf.container.get(&key).ok_or_else(|| Error::Load {
                layer: p.layer.clone(),
                detail: format!("missing array `{key}`"),
            })?;
            check_shape(blob, &p.layer, p.tensor.shape())?;
            let trainable = match blob.attrs.get("trainable").map(String::as_str) {
                None | Some("true") => true,
                Some("false") => false,
                Some(other) => {
                    return Err(Error::Load {
                        layer: p.layer.clone(),
                        detail: format!("trainable flag `{other}` is not a boolean"),
                    })
                }
            };
            staged.push((key.clone(), blob.data.clone(), trainable));
            known.insert(key);
        }
        let mut stats = BTreeMap::new();
        for (layer, _) in self.running_stats().iter() {
            let channels = self
                .params()
                .get(&format!("{layer}.gamma"))
                .map(|p| p.tensor.len())
                .unwrap_or(0);
            if let Some((m, v)) = running_pair(wf, layer, channels)? {
                known.insert(m.id.clone());
                known.insert(v.id.clone());
                stats.insert(
                    layer.clone(),
                    RunningStats {
                        mean: Some(m.data.clone()),
                        var: Some(v.data.clone()),
                    },
                );
            } else {
                stats.insert(layer.clone(), RunningStats::default());
            }
        }
        if let Some(extra) = wf.container.blobs.iter().find(|b| !known.contains(&b.id)) {
            return Err(Error::Load {
                layer: extra.layer.clone().unwrap_or_else(|| extra.id.clone()),
                detail: format!("array `{}` does not belong to this model", extra.id),
            });
        }

        for (key, data, trainable) in staged {
            let p = self.params_mut().get_mut(&key).expect("validated above");
            let shape = p.tensor.shape().to_vec();
            p.tensor = Tensor::new(shape, data)?;
            p.trainable = trainable;
        }
        let layer_flags: Vec<(String, bool)> = self
            .layers()
            .filter(|l| l.has_params())
            .map(|l| {
                let t = self.params().iter().filter(|p| p.layer == l.id).all(|p| p.trainable);
                (l.id.clone(), t)
            })
            .collect();
        for (id, t) in layer_flags {
            self.set_layer_trainable(&id, t)?;
        }
        *self.running_stats_mut() = stats;
        Ok(())
    }
}
