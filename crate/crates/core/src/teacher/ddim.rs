//! Deterministic ODE simulation: the DDIM trajectory from noise to sample.

use crate::error::{DdError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::schedule::{ddim_step, NoiseSchedule};

/// Anything that predicts noise for a state at a timestep. Conditioning
/// (input-image tokens, camera maps) is captured by the implementor.
pub trait Denoiser<T: Scalar> {
    fn denoise(&self, x_t: &Tensor<T>, t: usize) -> Result<Tensor<T>>;
}

/// Perfect denoiser for a fixed target: returns the exact noise that maps
/// the target onto `x_t`, so DDIM must terminate at the target.
pub struct OracleDenoiser<T> {
    pub target: Tensor<T>,
    pub schedule: NoiseSchedule<T>,
}

impl<T: Scalar> Denoiser<T> for OracleDenoiser<T> {
    fn denoise(&self, x_t: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        let ab = self.schedule.alpha_bar(t);
        let sa = ab.sqrt();
        let sb = (T::one() - ab).sqrt();
        Ok(Tensor::new(
            x_t.shape(),
            x_t.data()
                .iter()
                .zip(self.target.data())
                .map(|(&x, &x0)| (x - sa * x0) / sb)
                .collect(),
        ))
    }
}

/// Evenly spaced DDIM timesteps: `T, T-r, ..., r` (then a final step to 0).
pub fn ddim_timesteps(total: usize, steps: usize) -> Vec<usize> {
    assert!(steps >= 1 && total % steps == 0);
    let ratio = total / steps;
    (0..steps).map(|k| total - k * ratio).collect()
}

/// Simulate the full deterministic trajectory from `x_T = noise` down to the
/// sample estimate at t=0. Output is NOT clipped; callers working in image
/// space clip to `[0, 1]`.
pub fn sample_ode<T: Scalar, D: Denoiser<T>>(
    denoiser: &D,
    noise: &Tensor<T>,
    schedule: &NoiseSchedule<T>,
    steps: usize,
) -> Result<Tensor<T>> {
    let ts = ddim_timesteps(schedule.timesteps(), steps);
    let mut x = noise.clone();
    for (k, &t) in ts.iter().enumerate() {
        let t_prev = if k + 1 < ts.len() { ts[k + 1] } else { 0 };
        let eps_hat = denoiser.denoise(&x, t)?;
        x = ddim_step(schedule, &x, t, t_prev, &eps_hat);
        if !x.all_finite() {
            return Err(DdError::Numeric(format!(
                "non-finite state after DDIM step {k} (t={t} -> {t_prev})"
            )));
        }
    }
    Ok(x)
}
