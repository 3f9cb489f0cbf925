//! Dense row-major tensors and the handful of hot kernels everything else
//! builds on.
//!
//! Kernel reductions run in a fixed order (lane-split accumulators, sequential
//! lane merge), so results are bit-reproducible for a given platform while
//! still autovectorizing.

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterpret with a new shape of identical volume.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Widen/narrow to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.dbl())).collect(),
        }
    }
}

pub mod kernels {
    use super::Scalar;

    const LANES: usize = 8;

    /// Fixed-order dot product: 8 independent lane accumulators merged in
    /// lane order, remainder appended sequentially.
    #[inline]
    pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = [T::zero(); LANES];
        let chunks = a.len() / LANES;
        for i in 0..chunks {
            let off = i * LANES;
            for l in 0..LANES {
                acc[l] = acc[l] + a[off + l] * b[off + l];
            }
        }
        let mut s = T::zero();
        for l in 0..LANES {
            s = s + acc[l];
        }
        for i in chunks * LANES..a.len() {
            s = s + a[i] * b[i];
        }
        s
    }

    /// `y[i] += alpha * x[i]`
    #[inline]
    pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), y.len());
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi = *yi + alpha * *xi;
        }
    }

    /// out[m,n] = a[m,k] · b[k,n]  (ikj order: deterministic, streams b rows)
    pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), k * n);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &av) in arow.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                axpy(av, &b[p * n..(p + 1) * n], orow);
            }
        }
        out
    }

    /// out[m,n] = a[m,k] · b[n,k]ᵀ  (row-row dots)
    pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), n * k);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot(arow, &b[j * k..(j + 1) * k]);
            }
        }
        out
    }

    /// out[k,n] = a[m,k]ᵀ · b[m,n]  (outer-product accumulation, m outer)
    pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), m * n);
        let mut out = vec![T::zero(); k * n];
        for i in 0..m {
            let brow = &b[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == T::zero() {
                    continue;
                }
                axpy(av, brow, &mut out[p * n..(p + 1) * n]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        // small random-ish matrices, compare the three kernels via transposes
        let m = 3;
        let k = 5;
        let n = 4;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 1.3).cos()).collect();
        let c = kernels::matmul(&a, &b, m, k, n);
        // naive reference
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                assert!((c[i * n + j] - s).abs() < 1e-12);
            }
        }
        // b transposed
        let mut bt = vec![0.0; k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let c2 = kernels::matmul_nt(&a, &bt, m, k, n);
        for (x, y) in c.iter().zip(c2.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        // aᵀ·d with d shaped [m, n]
        let d: Vec<f64> = (0..m * n).map(|i| (i as f64 * 0.9).sin()).collect();
        let c3 = kernels::matmul_tn(&a, &d, m, k, n);
        for p in 0..k {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..m {
                    s += a[i * k + p] * d[i * n + j];
                }
                assert!((c3[p * n + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dot_deterministic_and_correct() {
        let a: Vec<f32> = (0..103).map(|i| (i as f32 * 0.01).sin()).collect();
        let b: Vec<f32> = (0..103).map(|i| (i as f32 * 0.02).cos()).collect();
        let d1 = kernels::dot(&a, &b);
        let d2 = kernels::dot(&a, &b);
        assert_eq!(d1.to_bits(), d2.to_bits());
        let reference: f64 = a.iter().zip(&b).map(|(&x, &y)| x as f64 * y as f64).sum();
        assert!((d1 as f64 - reference).abs() < 1e-4);
    }

    #[test]
    fn tensor_shape_checks() {
        let t = Tensor::<f32>::zeros(&[2, 3]);
        assert_eq!(t.len(), 6);
        let r = t.reshaped(&[3, 2]);
        assert_eq!(r.shape(), &[3, 2]);
    }
}
