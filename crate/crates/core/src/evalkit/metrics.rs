//! Reference image metrics: PSNR and windowed SSIM.
//!
//! These are direct-loop implementations, deliberately independent of the
//! autodiff graph that powers the differentiable perceptual proxy — the two
//! routes cross-check each other in tests.

use crate::image_plane::ImagePlane;
use crate::scalar::Scalar;

pub const PSNR_CAP_DB: f64 = 100.0;

pub fn mse<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>) -> f64 {
    assert_eq!(a.pixels().len(), b.pixels().len(), "mse: shape mismatch");
    let mut acc = 0.0f64;
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        let d = x.dbl() - y.dbl();
        acc += d * d;
    }
    acc / a.pixels().len() as f64
}

/// `10·log10(1/MSE)` in dB, capped at 100 dB for MSE below 1e-10.
pub fn psnr<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>) -> f64 {
    let m = mse(a, b);
    if m < 1e-10 {
        return PSNR_CAP_DB;
    }
    10.0 * (1.0 / m).log10()
}

/// 11×11 Gaussian window, σ = 1.5 (the standard SSIM choice).
pub(crate) fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let y = (i / size) as f64 - c;
            let x = (i % size) as f64 - c;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;

/// Windowed SSIM over valid positions, mean over channels. Images smaller
/// than the window fall back to a single uniform global window.
pub fn ssim<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>) -> f64 {
    assert_eq!(a.width(), b.width());
    assert_eq!(a.height(), b.height());
    let (w, h) = (a.width(), a.height());
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);

    let (win, ww, wh): (Vec<f64>, usize, usize) = if w < SSIM_WINDOW || h < SSIM_WINDOW {
        (vec![1.0 / (w * h) as f64; w * h], w, h)
    } else {
        (gaussian_window(SSIM_WINDOW, 1.5), SSIM_WINDOW, SSIM_WINDOW)
    };

    let mut total = 0.0f64;
    let mut count = 0usize;
    for ch in 0..3 {
        for oy in 0..=(h - wh) {
            for ox in 0..=(w - ww) {
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                let mut xx = 0.0;
                let mut yy = 0.0;
                let mut xy = 0.0;
                for ky in 0..wh {
                    for kx in 0..ww {
                        let wgt = win[ky * ww + kx];
                        let p = ((oy + ky) * w + (ox + kx)) * 3 + ch;
                        let xv = a.pixels()[p].dbl();
                        let yv = b.pixels()[p].dbl();
                        mu_x += wgt * xv;
                        mu_y += wgt * yv;
                        xx += wgt * xv * xv;
                        yy += wgt * yv * yv;
                        xy += wgt * xv * yv;
                    }
                }
                let var_x = xx - mu_x * mu_x;
                let var_y = yy - mu_y * mu_y;
                let cov = xy - mu_x * mu_y;
                let val = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                    / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
                total += val;
                count += 1;
            }
        }
    }
    total / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(v: f32) -> ImagePlane<f32> {
        ImagePlane::solid(16, 16, [v, v, v]).unwrap()
    }

    #[test]
    fn psnr_identity_and_known_values() {
        let a = solid(0.5);
        assert_eq!(psnr(&a, &a), 100.0);
        // MSE = 0.01 -> 20 dB
        let b = solid(0.6);
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-4);
        // white vs black -> 0 dB
        let w = solid(1.0);
        let k = solid(0.0);
        assert!((psnr(&w, &k) - 0.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let mut data = vec![0.0f32; 16 * 16 * 3];
        for (i, v) in data.iter_mut().enumerate() {
            *v = ((i * 37) % 97) as f32 / 97.0;
        }
        let a = ImagePlane::new(16, 16, data.clone(), None).unwrap();
        let b = ImagePlane::new(16, 16, data.iter().map(|v| 1.0 - v).collect(), None).unwrap();
        assert!((ssim(&a, &a) - 1.0).abs() < 1e-9);
        assert!((ssim(&a, &b) - ssim(&b, &a)).abs() < 1e-12);
        assert!(ssim(&a, &b) < 1.0);
    }

    #[test]
    fn ssim_range_on_structured_pair() {
        // checker vs inverted checker: strongly negative structure term
        let mut a = vec![0.0f32; 32 * 32 * 3];
        let mut b = vec![0.0f32; 32 * 32 * 3];
        for y in 0..32 {
            for x in 0..32 {
                let v = ((x / 4 + y / 4) % 2) as f32;
                for c in 0..3 {
                    a[(y * 32 + x) * 3 + c] = v;
                    b[(y * 32 + x) * 3 + c] = 1.0 - v;
                }
            }
        }
        let a = ImagePlane::new(32, 32, a, None).unwrap();
        let b = ImagePlane::new(32, 32, b, None).unwrap();
        let v = ssim(&a, &b);
        assert!((-1.0..0.0).contains(&v), "checker ssim {v}");
    }
}
