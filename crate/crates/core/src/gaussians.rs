//! The unstructured 3D Gaussian attribute set `{μ, s, q, c, α}`.

use crate::error::{DdError, Result};
use crate::scalar::{s, Scalar};

pub const SCALE_LOG_MIN: f64 = -9.0;
pub const SCALE_LOG_MAX: f64 = -3.0;
pub const OPACITY_EPS: f64 = 1e-4;

/// Immutable set of `M` anisotropic Gaussians. Flat row-major storage:
/// positions `[M*3]`, scales `[M*3]`, rotations `[M*4]` (w,x,y,z unit
/// quaternions), colors `[M*3]` in `[0,1]`, opacities `[M]` clamped into
/// `[1e-4, 1-1e-4]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet<T> {
    count: usize,
    positions: Vec<T>,
    scales: Vec<T>,
    rotations: Vec<T>,
    colors: Vec<T>,
    opacities: Vec<T>,
}

impl<T: Scalar> GaussianSet<T> {
    pub fn new(
        positions: Vec<T>,
        scales: Vec<T>,
        rotations: Vec<T>,
        colors: Vec<T>,
        opacities: Vec<T>,
    ) -> Result<Self> {
        let m = opacities.len();
        let set = GaussianSet { count: m, positions, scales, rotations, colors, opacities };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.count;
        if m == 0 {
            return Err(DdError::Invariant("GaussianSet must be non-empty".into()));
        }
        if self.positions.len() != m * 3
            || self.scales.len() != m * 3
            || self.rotations.len() != m * 4
            || self.colors.len() != m * 3
            || self.opacities.len() != m
        {
            return Err(DdError::Invariant(format!(
                "attribute arrays disagree on M={m}: pos {}, scale {}, rot {}, color {}, alpha {}",
                self.positions.len(),
                self.scales.len(),
                self.rotations.len(),
                self.colors.len(),
                self.opacities.len()
            )));
        }
        for (name, arr) in [
            ("positions", &self.positions),
            ("scales", &self.scales),
            ("rotations", &self.rotations),
            ("colors", &self.colors),
            ("opacities", &self.opacities),
        ] {
            if !arr.iter().all(|v| v.is_finite()) {
                return Err(DdError::Invariant(format!("non-finite value in {name}")));
            }
        }
        let (smin, smax) = (
            s::<T>(SCALE_LOG_MIN.exp() * (1.0 - 1e-5)),
            s::<T>(SCALE_LOG_MAX.exp() * (1.0 + 1e-5)),
        );
        for &v in &self.scales {
            if v < smin || v > smax {
                return Err(DdError::Invariant(format!(
                    "scale {v} outside [exp({SCALE_LOG_MIN}), exp({SCALE_LOG_MAX})]"
                )));
            }
        }
        let (amin, amax) = (
            s::<T>(OPACITY_EPS * (1.0 - 1e-5)),
            s::<T>(1.0 - OPACITY_EPS * (1.0 - 1e-5)),
        );
        for &a in &self.opacities {
            if a < amin || a > amax {
                return Err(DdError::Invariant(format!(
                    "opacity {a} outside [{OPACITY_EPS}, 1-{OPACITY_EPS}]"
                )));
            }
        }
        for &c in &self.colors {
            if c < -s::<T>(1e-6) || c > s::<T>(1.0 + 1e-6) {
                return Err(DdError::Invariant(format!("color {c} outside [0, 1]")));
            }
        }
        for i in 0..m {
            let q = &self.rotations[i * 4..(i + 1) * 4];
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if (n - T::one()).abs() > s(1e-5) {
                return Err(DdError::Invariant(format!(
                    "quaternion {i} has norm {n}, expected 1 within 1e-5"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }
    pub fn scales(&self) -> &[T] {
        &self.scales
    }
    pub fn rotations(&self) -> &[T] {
        &self.rotations
    }
    pub fn colors(&self) -> &[T] {
        &self.colors
    }
    pub fn opacities(&self) -> &[T] {
        &self.opacities
    }

    pub fn position(&self, i: usize) -> [T; 3] {
        [self.positions[i * 3], self.positions[i * 3 + 1], self.positions[i * 3 + 2]]
    }
    pub fn scale(&self, i: usize) -> [T; 3] {
        [self.scales[i * 3], self.scales[i * 3 + 1], self.scales[i * 3 + 2]]
    }
    pub fn rotation(&self, i: usize) -> [T; 4] {
        [
            self.rotations[i * 4],
            self.rotations[i * 4 + 1],
            self.rotations[i * 4 + 2],
            self.rotations[i * 4 + 3],
        ]
    }
    pub fn color(&self, i: usize) -> [T; 3] {
        [self.colors[i * 3], self.colors[i * 3 + 1], self.colors[i * 3 + 2]]
    }
    pub fn opacity(&self, i: usize) -> T {
        self.opacities[i]
    }

    pub fn cast<U: Scalar>(&self) -> GaussianSet<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.dbl())).collect::<Vec<U>>();
        GaussianSet {
            count: self.count,
            positions: conv(&self.positions),
            scales: conv(&self.scales),
            rotations: conv(&self.rotations),
            colors: conv(&self.colors),
            opacities: conv(&self.opacities),
        }
    }

    /// Concatenate several sets (used by the procedural scene builder).
    pub fn concat(sets: &[GaussianSet<T>]) -> Result<Self> {
        let mut positions = Vec::new();
        let mut scales = Vec::new();
        let mut rotations = Vec::new();
        let mut colors = Vec::new();
        let mut opacities = Vec::new();
        for set in sets {
            positions.extend_from_slice(&set.positions);
            scales.extend_from_slice(&set.scales);
            rotations.extend_from_slice(&set.rotations);
            colors.extend_from_slice(&set.colors);
            opacities.extend_from_slice(&set.opacities);
        }
        GaussianSet::new(positions, scales, rotations, colors, opacities)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_gaussian() -> GaussianSet<f32> {
        GaussianSet::new(
            vec![0.0, 0.0, 0.0],
            vec![0.01, 0.01, 0.01],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.5],
            vec![0.5],
        )
        .unwrap()
    }

    #[test]
    fn valid_set_passes() {
        let g = one_gaussian();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn rejects_empty() {
        assert!(GaussianSet::<f32>::new(vec![], vec![], vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn rejects_bad_quaternion_norm() {
        let r = GaussianSet::new(
            vec![0.0f32, 0.0, 0.0],
            vec![0.01, 0.01, 0.01],
            vec![1.1, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.5],
            vec![0.5],
        );
        assert!(r.is_err());
    }

    #[test]
    fn rejects_out_of_range_scale_and_opacity() {
        let r = GaussianSet::new(
            vec![0.0f32, 0.0, 0.0],
            vec![0.2, 0.01, 0.01], // > exp(-3)
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.5],
            vec![0.5],
        );
        assert!(r.is_err());
        let r = GaussianSet::new(
            vec![0.0f32, 0.0, 0.0],
            vec![0.01, 0.01, 0.01],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.5],
            vec![1.0], // not clamped
        );
        assert!(r.is_err());
    }

    #[test]
    fn boundary_values_accepted() {
        let r = GaussianSet::new(
            vec![0.0f32, 0.0, 0.0],
            vec![(-9.0f32).exp(), (-3.0f32).exp(), 0.01],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.5],
            vec![1.0 - 1e-4],
        );
        assert!(r.is_ok());
    }
}
