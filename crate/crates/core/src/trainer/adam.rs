//! Adam with component-wise gradient clipping.

use crate::nn::ParamStore;
use crate::scalar::{s, Scalar};

pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: usize,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let m = store.ids().map(|id| vec![T::zero(); store.value(id).len()]).collect();
        let v = store.ids().map(|id| vec![T::zero(); store.value(id).len()]).collect();
        Adam { lr: s(lr), beta1: s(0.9), beta2: s(0.999), eps: s(1e-8), step: 0, m, v }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update from the gradients accumulated in the store. Every gradient
    /// component is clipped into `[-clip, clip]` first.
    pub fn step(&mut self, store: &mut ParamStore<T>, clip: T) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for (idx, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            // clip, then update moments
            let grads: Vec<T> = store
                .grad(id)
                .iter()
                .map(|&g| g.max(-clip).min(clip))
                .collect();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for (j, &g) in grads.iter().enumerate() {
                m[j] = self.beta1 * m[j] + (T::one() - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (T::one() - self.beta2) * g * g;
            }
            let value = store.value_mut(id);
            let data = value.data_mut();
            for j in 0..data.len() {
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] = data[j] - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    /// Flattened moment vectors for checkpointing, aligned with store order.
    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, step: usize, m: Vec<Vec<T>>, v: Vec<Vec<T>>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.step = step;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn clipping_bounds_the_step_direction() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::zeros(&[2]));
        store.accum_grad(id, &[100.0, -0.5]);
        let mut opt = Adam::new(&store, 0.1);
        // huge positive gradient clips to +5: both components move opposite
        // their (clipped) gradient sign with magnitude ≈ lr
        opt.step(&mut store, 5.0);
        let w = store.value(id).data();
        assert!(w[0] < 0.0 && w[1] > 0.0);
        assert!((w[0].abs() - 0.1).abs() < 0.02);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::new(&[2], vec![1.0, -2.0]));
        let mut opt = Adam::new(&store, 0.1);
        opt.step(&mut store, 5.0);
        assert_eq!(store.value(id).data(), &[1.0, -2.0]);
    }
}
