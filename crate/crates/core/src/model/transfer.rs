use serde::{Deserialize, Serialize};

use super::graph::ModelGraph;
use super::layers::LayerKind;
use super::weights::{check_shape, running_pair, WeightFile};
use crate::error::{Error, Result};
use crate::tensor::{RunningStats, Tensor};

/// Which imported backbone layers stay fixed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezePolicy {
    None,
    /// Every convolutional block except the last one.
    #[default]
    AllButLastBlock,
    /// The whole convolutional backbone.
    Backbone,
}

impl std::str::FromStr for FreezePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "all-but-last-block" => Ok(Self::AllButLastBlock),
            "backbone" => Ok(Self::Backbone),
            other => Err(format!(
                "unknown freeze policy `{other}` (none | all-but-last-block | backbone)"
            )),
        }
    }
}

/// Loads backbone arrays from `weights` into `graph` and freezes layers by policy.
///
/// Convolution kernels and biases are required for every backbone convolution.
/// Batchnorm arrays are optional: absent ones keep their fresh initialisation.
/// Head layers are left as built (random, trainable). Nothing is modified
/// unless every array validates.
pub fn apply_transfer(mut graph: ModelGraph, weights: &WeightFile, policy: FreezePolicy) -> Result<ModelGraph> {
    let last_block = graph.num_blocks();
    let mut staged: Vec<(String, Vec<f32>)> = Vec::new();
    let mut stats: Vec<(String, RunningStats)> = Vec::new();
    let mut freeze: Vec<String> = Vec::new();

    for layer in graph.layers().filter(|l| l.block.is_some() && l.has_params()) {
        let id = &layer.id;
        let block = layer.block.unwrap_or(0);
        let frozen = match policy {
            FreezePolicy::None => false,
            FreezePolicy::AllButLastBlock => block < last_block,
            FreezePolicy::Backbone => true,
        };
        if frozen {
            freeze.push(id.clone());
        }
        let names: &[&str] = match layer.kind {
            LayerKind::Conv { .. } => &["kernel", "bias"],
            LayerKind::BatchNorm => &["gamma", "beta"],
            _ => &[],
        };
        let required = matches!(layer.kind, LayerKind::Conv { .. });
        for name in names {
            let key = format!("{id}.{name}");
            let expected = graph.params().get(&key).expect("built layer owns its params").tensor.shape();
            match weights.get(id, name) {
                Some(blob) => {
                    check_shape(blob, id, expected)?;
                    staged.push((key, blob.data.clone()));
                }
                None if required => {
                    return Err(Error::Load {
                        layer: id.clone(),
                        detail: format!("weight file has no `{key}`"),
                    })
                }
                None => {}
            }
        }
        if matches!(layer.kind, LayerKind::BatchNorm) {
            let channels = graph.params().get(&format!("{id}.gamma")).map_or(0, |p| p.tensor.len());
            if let Some((m, v)) = running_pair(weights, id, channels)? {
                stats.push((
                    id.clone(),
                    RunningStats {
                        mean: Some(m.data.clone()),
                        var: Some(v.data.clone()),
                    },
                ));
            }
        }
    }

    for (key, data) in staged {
        let p = graph.params_mut().get_mut(&key).expect("validated above");
        let shape = p.tensor.shape().to_vec();
        p.tensor = Tensor::new(shape, data)?;
    }
    graph.running_stats_mut().extend(stats);
    for id in freeze {
        graph.set_layer_trainable(&id, false)?;
    }
    Ok(graph)
}
