//! Minimal dense tensor core: the layer kernels the ResNet family needs,
//! a recorded graph for reverse-mode gradients, and Adam.

mod adam;
mod graph;
pub mod ops;
mod tensor;

use std::collections::HashMap;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use ops::Mode;
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Ordered collection of named tensors. Insertion order is the slot order
/// used by [`Graph::param`] and [`AdamState`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::State(format!("duplicate tensor name '{name}'")));
        }
        let slot = self.tensors.len();
        self.index.insert(name.clone(), slot);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slot(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slot(name).map(move |i| &mut self.tensors[i])
    }

    pub fn at(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn at_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    /// Total number of scalar elements.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }
}
