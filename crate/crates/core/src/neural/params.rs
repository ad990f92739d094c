use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{NeuralError, Tensor};

/// Rounds to the precision weights are kept and serialized at.
#[inline]
pub fn to_storage(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Values are rounded to the nearest `f32`: weights are
    /// stored at single precision while arithmetic runs in `f64`.
    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        for v in tensor.data_mut() {
            *v = to_storage(*v);
        }
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    /// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("sized"))
    }

    pub fn add_normal<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], std: f64, rng: &mut R) -> ParamId {
        let dist = Normal::new(0.0f64, std).expect("positive std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("sized"))
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, value))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Overwrites a parameter with a tensor of the same shape.
    pub fn replace(&mut self, id: ParamId, mut tensor: Tensor) -> Result<(), NeuralError> {
        if tensor.shape() != self.tensors[id.0].shape() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{}: expected {:?}, got {:?}",
                self.names[id.0],
                self.tensors[id.0].shape(),
                tensor.shape()
            )));
        }
        for v in tensor.data_mut() {
            *v = to_storage(*v);
        }
        self.tensors[id.0] = tensor;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}
