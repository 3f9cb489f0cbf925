//! Attribute activations mapping raw head outputs into the constrained
//! Gaussian ranges, plus their exact jacobians for the backward pass.

use crate::error::Result;
use crate::gaussians::{GaussianSet, OPACITY_EPS, SCALE_LOG_MAX, SCALE_LOG_MIN};
use crate::renderer::AttributeGrads;
use crate::scalar::{s, Scalar};

/// World-space position bound: μ = POSITION_BOUND · tanh(raw).
pub const POSITION_BOUND: f64 = 1.0;
const QUAT_NORM_FLOOR: f64 = 1e-8;

/// Raw head outputs for one sample: `[M,3] [M,3] [M,4] [M,3] [M]`, flattened.
#[derive(Clone, Debug)]
pub struct RawAttributes<T> {
    pub mu: Vec<T>,
    pub scale: Vec<T>,
    pub quat: Vec<T>,
    pub color: Vec<T>,
    pub alpha: Vec<T>,
}

/// Raw-space gradients, same layout as [`RawAttributes`].
#[derive(Clone, Debug)]
pub struct RawGrads<T> {
    pub mu: Vec<T>,
    pub scale: Vec<T>,
    pub quat: Vec<T>,
    pub color: Vec<T>,
    pub alpha: Vec<T>,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// μ = B·tanh(raw); s = exp(−9 + 6σ(raw)); q = raw/‖raw‖ (identity fallback);
/// c = σ(raw); α = clamp(σ(raw), 1e-4, 1−1e-4). The output always satisfies
/// every `GaussianSet` invariant.
pub fn activate_attributes<T: Scalar>(raw: &RawAttributes<T>) -> Result<GaussianSet<T>> {
    let m = raw.alpha.len();
    assert_eq!(raw.mu.len(), m * 3);
    assert_eq!(raw.scale.len(), m * 3);
    assert_eq!(raw.quat.len(), m * 4);
    assert_eq!(raw.color.len(), m * 3);
    let bound = s::<T>(POSITION_BOUND);
    let lo = s::<T>(SCALE_LOG_MIN);
    let span = s::<T>(SCALE_LOG_MAX - SCALE_LOG_MIN);
    let eps = s::<T>(OPACITY_EPS);

    let positions: Vec<T> = raw.mu.iter().map(|&x| bound * x.tanh()).collect();
    let scales: Vec<T> = raw.scale.iter().map(|&x| (lo + span * sigmoid(x)).exp()).collect();
    let mut rotations = Vec::with_capacity(m * 4);
    for i in 0..m {
        let q = &raw.quat[i * 4..(i + 1) * 4];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < s(QUAT_NORM_FLOOR) {
            rotations.extend_from_slice(&[T::one(), T::zero(), T::zero(), T::zero()]);
        } else {
            rotations.extend(q.iter().map(|&v| v / n));
        }
    }
    let colors: Vec<T> = raw.color.iter().map(|&x| sigmoid(x)).collect();
    let opacities: Vec<T> = raw
        .alpha
        .iter()
        .map(|&x| sigmoid(x).max(eps).min(T::one() - eps))
        .collect();
    GaussianSet::new(positions, scales, rotations, colors, opacities)
}

/// Chain activated-space adjoints back into raw space.
pub fn activation_backward<T: Scalar>(
    raw: &RawAttributes<T>,
    grads: &AttributeGrads<T>,
) -> RawGrads<T> {
    let m = raw.alpha.len();
    let bound = s::<T>(POSITION_BOUND);
    let span = s::<T>(SCALE_LOG_MAX - SCALE_LOG_MIN);
    let lo = s::<T>(SCALE_LOG_MIN);
    let eps = s::<T>(OPACITY_EPS);

    let mu = raw
        .mu
        .iter()
        .zip(&grads.positions)
        .map(|(&x, &g)| {
            let t = x.tanh();
            g * bound * (T::one() - t * t)
        })
        .collect();
    let scale = raw
        .scale
        .iter()
        .zip(&grads.scales)
        .map(|(&x, &g)| {
            let sg = sigmoid(x);
            let sval = (lo + span * sg).exp();
            g * sval * span * sg * (T::one() - sg)
        })
        .collect();
    let mut quat = vec![T::zero(); m * 4];
    for i in 0..m {
        let q = &raw.quat[i * 4..(i + 1) * 4];
        let gq = &grads.rotations[i * 4..(i + 1) * 4];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < s(QUAT_NORM_FLOOR) {
            continue; // fallback plateau
        }
        let qh = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        let dot = gq[0] * qh[0] + gq[1] * qh[1] + gq[2] * qh[2] + gq[3] * qh[3];
        for c in 0..4 {
            quat[i * 4 + c] = (gq[c] - dot * qh[c]) / n;
        }
    }
    let color = raw
        .color
        .iter()
        .zip(&grads.colors)
        .map(|(&x, &g)| {
            let c = sigmoid(x);
            g * c * (T::one() - c)
        })
        .collect();
    let alpha = raw
        .alpha
        .iter()
        .zip(&grads.opacities)
        .map(|(&x, &g)| {
            let a = sigmoid(x);
            if a <= eps || a >= T::one() - eps {
                T::zero() // clamp plateau
            } else {
                g * a * (T::one() - a)
            }
        })
        .collect();
    RawGrads { mu, scale, quat, color, alpha }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{draw_range, seeded_rng};

    #[test]
    fn known_activation_values() {
        let raw = RawAttributes::<f64> {
            mu: vec![0.0, 0.0, 0.0],
            scale: vec![0.0, 1e9, -1e9],
            quat: vec![0.0, 0.0, 0.0, 0.0],
            color: vec![0.0, 0.0, 0.0],
            alpha: vec![0.0],
        };
        let g = activate_attributes(&raw).unwrap();
        // raw scale 0 -> exp(-6)
        assert!((g.scale(0)[0] - (-6.0f64).exp()).abs() < 1e-12);
        assert!((g.scale(0)[0] - 2.4788e-3).abs() < 1e-6);
        // saturated -> exp(-3), exp(-9)
        assert!((g.scale(0)[1] - (-3.0f64).exp()).abs() < 1e-12);
        assert!((g.scale(0)[2] - (-9.0f64).exp()).abs() < 1e-12);
        // zero quaternion falls back to identity
        assert_eq!(g.rotation(0), [1.0, 0.0, 0.0, 0.0]);
        // α = σ(0) = 0.5, μ at the activation midpoint
        assert_eq!(g.opacity(0), 0.5);
        assert_eq!(g.position(0), [0.0, 0.0, 0.0]);
        assert_eq!(g.color(0), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn random_raw_always_satisfies_invariants() {
        for seed in 0..100u64 {
            let mut rng = seeded_rng(seed, "activate");
            let m = 8;
            let raw = RawAttributes::<f32> {
                mu: (0..m * 3).map(|_| draw_range(&mut rng, -30.0, 30.0)).collect(),
                scale: (0..m * 3).map(|_| draw_range(&mut rng, -30.0, 30.0)).collect(),
                quat: (0..m * 4).map(|_| draw_range(&mut rng, -3.0, 3.0)).collect(),
                color: (0..m * 3).map(|_| draw_range(&mut rng, -30.0, 30.0)).collect(),
                alpha: (0..m).map(|_| draw_range(&mut rng, -30.0, 30.0)).collect(),
            };
            let g = activate_attributes(&raw).unwrap();
            g.validate().unwrap();
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded_rng(9, "activate-fd");
        let m = 4;
        let raw = RawAttributes::<f64> {
            mu: (0..m * 3).map(|_| draw_range(&mut rng, -1.5, 1.5)).collect(),
            scale: (0..m * 3).map(|_| draw_range(&mut rng, -1.5, 1.5)).collect(),
            quat: (0..m * 4).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect(),
            color: (0..m * 3).map(|_| draw_range(&mut rng, -1.5, 1.5)).collect(),
            alpha: (0..m).map(|_| draw_range(&mut rng, -1.5, 1.5)).collect(),
        };
        // random upstream in activated space
        let up = AttributeGrads::<f64> {
            positions: (0..m * 3).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect(),
            scales: (0..m * 3).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect(),
            rotations: (0..m * 4).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect(),
            colors: (0..m * 3).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect(),
            opacities: (0..m).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect(),
            background: [0.0; 3],
        };
        let loss = |raw: &RawAttributes<f64>| -> f64 {
            let g = activate_attributes(raw).unwrap();
            let mut acc = 0.0;
            for (v, u) in g.positions().iter().zip(&up.positions) {
                acc += v * u;
            }
            for (v, u) in g.scales().iter().zip(&up.scales) {
                acc += v * u;
            }
            for (v, u) in g.rotations().iter().zip(&up.rotations) {
                acc += v * u;
            }
            for (v, u) in g.colors().iter().zip(&up.colors) {
                acc += v * u;
            }
            for (v, u) in g.opacities().iter().zip(&up.opacities) {
                acc += v * u;
            }
            acc
        };
        let analytic = activation_backward(&raw, &up);
        let h = 1e-6;
        let check = |get: &dyn Fn(&RawAttributes<f64>) -> Vec<f64>,
                         set: &dyn Fn(&mut RawAttributes<f64>, usize, f64),
                         an: &[f64],
                         label: &str| {
            let base = get(&raw);
            for j in 0..base.len() {
                let mut plus = raw.clone();
                set(&mut plus, j, base[j] + h);
                let mut minus = raw.clone();
                set(&mut minus, j, base[j] - h);
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!(
                    (an[j] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{label}[{j}]: {} vs {fd}",
                    an[j]
                );
            }
        };
        check(&|r| r.mu.clone(), &|r, j, v| r.mu[j] = v, &analytic.mu, "mu");
        check(&|r| r.scale.clone(), &|r, j, v| r.scale[j] = v, &analytic.scale, "scale");
        check(&|r| r.quat.clone(), &|r, j, v| r.quat[j] = v, &analytic.quat, "quat");
        check(&|r| r.color.clone(), &|r, j, v| r.color[j] = v, &analytic.color, "color");
        check(&|r| r.alpha.clone(), &|r, j, v| r.alpha[j] = v, &analytic.alpha, "alpha");
    }
}
