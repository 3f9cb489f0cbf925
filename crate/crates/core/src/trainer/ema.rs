//! Exponential moving average of parameters; evaluation and inference read
//! these weights by default.

use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct Ema<T> {
    pub decay: T,
    shadow: Vec<Tensor<T>>,
}

impl<T: Scalar> Ema<T> {
    /// Initialized to a copy of the current weights.
    pub fn new(store: &ParamStore<T>, decay: f64) -> Self {
        Ema { decay: T::of(decay), shadow: store.snapshot() }
    }

    /// `θ_ema ← d·θ_ema + (1−d)·θ`
    pub fn update(&mut self, store: &ParamStore<T>) {
        let d = self.decay;
        let one_minus = T::one() - d;
        for (sh, id) in self.shadow.iter_mut().zip(store.ids()) {
            let cur = store.value(id).data();
            for (a, &b) in sh.data_mut().iter_mut().zip(cur) {
                *a = d * *a + one_minus * b;
            }
        }
    }

    pub fn weights(&self) -> &[Tensor<T>] {
        &self.shadow
    }

    pub fn restore(&mut self, shadow: Vec<Tensor<T>>) {
        assert_eq!(shadow.len(), self.shadow.len());
        self.shadow = shadow;
    }

    /// Copy the averaged weights into a store (e.g. an inference clone).
    pub fn load_into(&self, store: &mut ParamStore<T>) {
        store.load_snapshot(&self.shadow);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_updates_keep_initial_weights() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::new(&[2], vec![1.0, 2.0]));
        let mut ema = Ema::new(&store, 0.999);
        for _ in 0..10 {
            ema.update(&store); // weights unchanged -> ema unchanged
        }
        assert_eq!(ema.weights()[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn decay_zero_tracks_current_weights() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::new(&[1], vec![1.0]));
        let mut ema = Ema::new(&store, 0.0);
        store.value_mut(id).data_mut()[0] = 5.0;
        ema.update(&store);
        assert_eq!(ema.weights()[0].data(), &[5.0]);
    }

    #[test]
    fn single_step_definition() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::new(&[1], vec![1.0]));
        let mut ema = Ema::new(&store, 0.999);
        store.value_mut(id).data_mut()[0] = 2.0;
        ema.update(&store);
        let expect = 0.999 * 1.0 + 0.001 * 2.0;
        assert!((ema.weights()[0].data()[0] - expect).abs() < 1e-6);
    }

    #[test]
    fn geometric_convergence_rate() {
        // constant target θ*: after n steps the remaining gap is d^n
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::new(&[1], vec![0.0]));
        let mut ema = Ema::new(&store, 0.999);
        store.value_mut(id).data_mut()[0] = 1.0;
        for _ in 0..1000 {
            ema.update(&store);
        }
        let gap = (1.0 - ema.weights()[0].data()[0]).abs();
        let expect = 0.999f64.powi(1000);
        assert!((gap - expect).abs() < 1e-9, "gap {gap} vs {expect}");
        let _ = id;
    }
}
