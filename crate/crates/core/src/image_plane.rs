//! RGB image planes in `[0, 1]`, row-major `[H, W, 3]`, optional alpha.

use crate::error::{DdError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,        // [H * W * 3]
    alpha: Option<Vec<T>>, // [H * W]
}

impl<T: Scalar> ImagePlane<T> {
    /// Values are clamped into `[0, 1]` (compositing guarantees the range up
    /// to round-off); non-finite input is rejected.
    pub fn new(width: usize, height: usize, pixels: Vec<T>, alpha: Option<Vec<T>>) -> Result<Self> {
        if width < 8 || height < 8 {
            return Err(DdError::Invariant(format!(
                "image must be at least 8x8, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(DdError::Invariant(format!(
                "pixel buffer length {} != {width}x{height}x3",
                pixels.len()
            )));
        }
        if !pixels.iter().all(|v| v.is_finite()) {
            return Err(DdError::Numeric("non-finite pixel value".into()));
        }
        if let Some(a) = &alpha {
            if a.len() != width * height {
                return Err(DdError::Invariant("alpha buffer length mismatch".into()));
            }
            if !a.iter().all(|v| v.is_finite()) {
                return Err(DdError::Numeric("non-finite alpha value".into()));
            }
        }
        let clamp01 = |v: T| v.max(T::zero()).min(T::one());
        Ok(ImagePlane {
            width,
            height,
            pixels: pixels.into_iter().map(clamp01).collect(),
            alpha: alpha.map(|a| a.into_iter().map(clamp01).collect()),
        })
    }

    pub fn solid(width: usize, height: usize, rgb: [T; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels, None)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }
    pub fn alpha(&self) -> Option<&[T]> {
        self.alpha.as_deref()
    }

    pub fn pixel(&self, ix: usize, iy: usize) -> [T; 3] {
        let p = (iy * self.width + ix) * 3;
        [self.pixels[p], self.pixels[p + 1], self.pixels[p + 2]]
    }

    /// `[3, H, W]` tensor (channel-major, the network-facing layout).
    pub fn to_chw(&self) -> Tensor<T> {
        let (w, h) = (self.width, self.height);
        let mut data = vec![T::zero(); 3 * h * w];
        for p in 0..h * w {
            for c in 0..3 {
                data[c * h * w + p] = self.pixels[p * 3 + c];
            }
        }
        Tensor::new(&[3, h, w], data)
    }

    /// Inverse of [`ImagePlane::to_chw`]; values clamped into `[0, 1]`.
    pub fn from_chw(t: &Tensor<T>) -> Result<Self> {
        let shape = t.shape();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(DdError::Invariant(format!(
                "expected [3, H, W] tensor, got {shape:?}"
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        let d = t.data();
        let mut pixels = vec![T::zero(); h * w * 3];
        for p in 0..h * w {
            for c in 0..3 {
                pixels[p * 3 + c] = d[c * h * w + p];
            }
        }
        Self::new(w, h, pixels, None)
    }

    pub fn mean_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let mut acc = T::zero();
        for (a, b) in self.pixels.iter().zip(&other.pixels) {
            acc = acc + (*a - *b).abs();
        }
        acc / T::of_usize(self.pixels.len())
    }

    pub fn cast<U: Scalar>(&self) -> ImagePlane<U> {
        ImagePlane {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| U::of(v.dbl())).collect(),
            alpha: self
                .alpha
                .as_ref()
                .map(|a| a.iter().map(|v| U::of(v.dbl())).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chw_roundtrip() {
        let img = ImagePlane::<f32>::new(
            8,
            8,
            (0..8 * 8 * 3).map(|i| (i % 7) as f32 / 7.0).collect(),
            None,
        )
        .unwrap();
        let t = img.to_chw();
        let back = ImagePlane::from_chw(&t).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn rejects_small_and_nan() {
        assert!(ImagePlane::<f32>::solid(4, 8, [0.0, 0.0, 0.0]).is_err());
        assert!(ImagePlane::<f32>::new(8, 8, vec![f32::NAN; 8 * 8 * 3], None).is_err());
    }
}
