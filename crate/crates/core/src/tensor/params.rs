use indexmap::IndexMap;

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in a fixed insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { tensors: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let (idx, _) = self.tensors.insert_full(name.into(), tensor);
        ParamId(idx)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.tensors.get_index_of(name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.tensors.get_index(id.0).map(|(k, _)| k.as_str()).expect("valid id")
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Per-parameter gradient buffers aligned with a [`ParamSet`].
///
/// Slots stay `None` until something flows into them; an untouched slot
/// reads as an all-zero gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    slots: Vec<Option<Vec<T>>>,
    sizes: Vec<usize>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        Gradients {
            slots: vec![None; params.len()],
            sizes: params.iter().map(|(_, t)| t.len()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.slots[id.0].as_deref()
    }

    /// Dense copy of one gradient, zeros when nothing reached the parameter.
    pub fn dense(&self, id: ParamId) -> Vec<T> {
        self.slots[id.0].clone().unwrap_or_else(|| vec![T::zero(); self.sizes[id.0]])
    }

    pub(crate) fn slot_mut(&mut self, id: ParamId) -> &mut Vec<T> {
        let size = self.sizes[id.0];
        self.slots[id.0].get_or_insert_with(|| vec![T::zero(); size])
    }

    pub fn set(&mut self, id: ParamId, values: Vec<T>) {
        assert_eq!(values.len(), self.sizes[id.0]);
        self.slots[id.0] = Some(values);
    }

    /// `self += other`, slot by slot.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (i, slot) in other.slots.iter().enumerate() {
            if let Some(g) = slot {
                let dst = self.slot_mut(ParamId(i));
                for (d, &s) in dst.iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.slots.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> T {
        self.slots
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().flatten().flat_map(|g| g.iter()).all(|v| v.is_finite())
    }

    pub fn is_nonzero(&self, id: ParamId) -> bool {
        self.get(id).is_some_and(|g| g.iter().any(|v| *v != T::zero()))
    }
}
