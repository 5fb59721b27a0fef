use std::collections::HashMap;

use super::{Tape, Tensor};
use crate::error::{Error, Result};

/// Which kind of layer owns a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Conv,
    #[serde(rename = "batchnorm")]
    BatchNorm,
    Dense,
    L1Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub layer: String,
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn key(&self) -> String {
        param_key(&self.layer, &self.name)
    }
}

pub fn param_key(layer: &str, name: &str) -> String {
    format!("{layer}.{name}")
}

/// Insertion-ordered parameter storage keyed by `layer.name`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, param: Param) -> Result<()> {
        let key = param.key();
        if self.index.contains_key(&key) {
            return Err(Error::Contract(format!("duplicate parameter `{key}`")));
        }
        self.index.insert(key, self.params.len());
        self.params.push(param);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Param> {
        self.index.get(key).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut Param> {
        self.index.get(key).map(|&i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Adds the gradients recorded on `tape` into the stored tensors.
    pub fn accumulate_grads(&mut self, tape: &Tape) -> Result<()> {
        for (key, g) in tape.param_grads() {
            let p = self
                .get_mut(key)
                .ok_or_else(|| Error::Contract(format!("tape references unknown parameter `{key}`")))?;
            if !p.trainable {
                continue;
            }
            let slot = p.tensor.grad_mut();
            match slot {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => *slot = Some(g.to_vec()),
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            *p.tensor.grad_mut() = None;
        }
    }
}
