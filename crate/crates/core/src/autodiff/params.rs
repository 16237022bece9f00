use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{EhdError, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// A named weight array.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Arc<Tensor>,
    pub trainable: bool,
}

/// Ordered collection of parameters owned by one model.
///
/// Each store carries a process-unique id so that gradients gathered from a
/// graph are attributed to the right store even when two models with the same
/// layout are bound into one graph.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Parameter>,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            id: fresh_id(),
            params: self.params.clone(),
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            id: fresh_id(),
            params: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Registers a parameter and returns its index. Names must be unique.
    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<usize> {
        if self.index_of(name).is_some() {
            return Err(EhdError::Config(format!("duplicate parameter name {name}")));
        }
        self.params.push(Parameter {
            name: name.to_string(),
            value: Arc::new(value),
            trainable,
        });
        Ok(self.params.len() - 1)
    }

    pub fn get(&self, index: usize) -> &Parameter {
        &self.params[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Indices of parameters the optimizer should update.
    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| self.params[i].trainable).collect()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        Arc::make_mut(&mut self.params[index].value)
    }

    /// Replaces every value and trainable flag with the same-named one from
    /// `other`, checking shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(EhdError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let j = other
                .index_of(&p.name)
                .ok_or_else(|| EhdError::Checkpoint(format!("missing parameter {}", p.name)))?;
            let src = &other.params[j].value;
            if src.shape() != p.value.shape() {
                return Err(EhdError::Checkpoint(format!(
                    "parameter {} has shape {:?}, config expects {:?}",
                    p.name,
                    src.shape(),
                    p.value.shape()
                )));
            }
            p.value = Arc::clone(src);
            p.trainable = other.params[j].trainable;
        }
        Ok(())
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Uniform values in `[-bound, bound]`.
pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("numel matches")
}

/// Glorot-uniform initialisation for a `[fan_in, fan_out]` matrix.
pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(&[fan_in, fan_out], bound, rng)
}
