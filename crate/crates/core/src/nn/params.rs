//! Named parameter storage shared by the teacher and the generator.

use std::collections::HashMap;

use rand::Rng;

use crate::rng::draw_uniform;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
}

/// Flat registry of learnable tensors. Gradients accumulate here between
/// `zero_grad` and the optimizer step.
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.entries.len());
        let grad = vec![T::zero(); value.len()];
        self.entries.push(ParamEntry { name: name.to_string(), value, grad });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Kaiming-style uniform init: U(-b, b) with b = sqrt(6 / fan_in).
    pub fn add_kaiming<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = (6.0 / fan_in as f64).sqrt();
        let t = Tensor::from_fn(shape, |_| {
            T::of((draw_uniform::<f64, _>(rng) * 2.0 - 1.0) * bound)
        });
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_full(&mut self, name: &str, shape: &[usize], v: f64) -> ParamId {
        self.add(name, Tensor::full(shape, T::of(v)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn accum_grad(&mut self, id: ParamId, src: &[T]) {
        let g = &mut self.entries[id.0].grad;
        assert_eq!(g.len(), src.len());
        for (gi, si) in g.iter_mut().zip(src) {
            *gi = *gi + *si;
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            for g in &mut e.grad {
                *g = T::zero();
            }
        }
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Snapshot of all values, e.g. for EMA tracking.
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn load_snapshot(&mut self, snap: &[Tensor<T>]) {
        assert_eq!(snap.len(), self.entries.len());
        for (e, s) in self.entries.iter_mut().zip(snap) {
            assert_eq!(e.value.shape(), s.shape(), "shape mismatch for {}", e.name);
            e.value = s.clone();
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}
