//! DDPM noise schedule: linear β, cumulative ᾱ.

use crate::error::{DdError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;

/// Shared ᾱ table. `alpha_bar(0) = 1` by convention (the identity step);
/// valid diffusion timesteps are `1..=len`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    betas: Vec<T>,     // [T], index t-1
    alpha_bar: Vec<T>, // [T+1], index t
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Linear β from `BETA_START` to `BETA_END` over `timesteps` steps.
    pub fn linear(timesteps: usize) -> Self {
        assert!(timesteps >= 2);
        let mut betas = Vec::with_capacity(timesteps);
        let mut alpha_bar = Vec::with_capacity(timesteps + 1);
        alpha_bar.push(1.0f64);
        let mut prod = 1.0f64;
        for i in 0..timesteps {
            let beta = BETA_START + (BETA_END - BETA_START) * i as f64 / (timesteps - 1) as f64;
            prod *= 1.0 - beta;
            betas.push(beta);
            alpha_bar.push(prod);
        }
        NoiseSchedule {
            betas: betas.into_iter().map(T::of).collect(),
            alpha_bar: alpha_bar.into_iter().map(T::of).collect(),
        }
    }

    /// Rebuild from a stored f64 table (checkpoint round-trip).
    pub fn from_alpha_bar(alpha_bar: &[f64]) -> Result<Self> {
        if alpha_bar.len() < 3 || (alpha_bar[0] - 1.0).abs() > 1e-12 {
            return Err(DdError::Format("bad alpha_bar table".into()));
        }
        let mut betas = Vec::with_capacity(alpha_bar.len() - 1);
        for t in 1..alpha_bar.len() {
            let a = alpha_bar[t] / alpha_bar[t - 1];
            if !(a > 0.0 && a < 1.0) {
                return Err(DdError::Format("alpha_bar not strictly decreasing".into()));
            }
            betas.push(T::of(1.0 - a));
        }
        Ok(NoiseSchedule {
            betas,
            alpha_bar: alpha_bar.iter().map(|&v| T::of(v)).collect(),
        })
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> T {
        assert!((1..=self.timesteps()).contains(&t));
        self.betas[t - 1]
    }

    /// ᾱ_t for `t` in `0..=timesteps`.
    pub fn alpha_bar(&self, t: usize) -> T {
        self.alpha_bar[t]
    }

    pub fn alpha_bar_table_f64(&self) -> Vec<f64> {
        self.alpha_bar.iter().map(|v| v.dbl()).collect()
    }

    /// `x_t = √ᾱ_t · x0 + √(1-ᾱ_t) · ε`, t in `[1, timesteps]`.
    pub fn forward_diffuse(&self, x0: &Tensor<T>, t: usize, eps: &Tensor<T>) -> Result<Tensor<T>> {
        if !(1..=self.timesteps()).contains(&t) {
            return Err(DdError::Invariant(format!(
                "timestep {t} outside [1, {}]",
                self.timesteps()
            )));
        }
        if x0.shape() != eps.shape() {
            return Err(DdError::Invariant("x0/eps shape mismatch".into()));
        }
        let ab = self.alpha_bar(t);
        let sa = ab.sqrt();
        let sb = (T::one() - ab).sqrt();
        Ok(Tensor::new(
            x0.shape(),
            x0.data()
                .iter()
                .zip(eps.data())
                .map(|(&x, &e)| sa * x + sb * e)
                .collect(),
        ))
    }

    /// Algebraic inversion: recover x0 from (x_t, ε).
    pub fn invert_diffuse(&self, xt: &Tensor<T>, t: usize, eps: &Tensor<T>) -> Result<Tensor<T>> {
        if !(1..=self.timesteps()).contains(&t) {
            return Err(DdError::Invariant(format!("timestep {t} out of range")));
        }
        let ab = self.alpha_bar(t);
        let sa = ab.sqrt();
        let sb = (T::one() - ab).sqrt();
        Ok(Tensor::new(
            xt.shape(),
            xt.data()
                .iter()
                .zip(eps.data())
                .map(|(&x, &e)| (x - sb * e) / sa)
                .collect(),
        ))
    }

    pub fn cast<U: Scalar>(&self) -> NoiseSchedule<U> {
        NoiseSchedule {
            betas: self.betas.iter().map(|v| U::of(v.dbl())).collect(),
            alpha_bar: self.alpha_bar.iter().map(|v| U::of(v.dbl())).collect(),
        }
    }
}

/// Deterministic DDIM update (η = 0):
/// `x0_hat = (x_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t`, then
/// `x_{t_prev} = √ᾱ_{t_prev}·x0_hat + √(1−ᾱ_{t_prev})·ε̂`.
pub fn ddim_step<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    x_t: &Tensor<T>,
    t: usize,
    t_prev: usize,
    eps_hat: &Tensor<T>,
) -> Tensor<T> {
    assert!(t >= t_prev, "ddim_step requires t >= t_prev");
    assert!(t >= 1 && t <= schedule.timesteps());
    assert_eq!(x_t.shape(), eps_hat.shape());
    if t == t_prev {
        return x_t.clone();
    }
    let ab_t = schedule.alpha_bar(t);
    let ab_p = schedule.alpha_bar(t_prev);
    let sa_t = ab_t.sqrt();
    let sb_t = (T::one() - ab_t).sqrt();
    let sa_p = ab_p.sqrt();
    let sb_p = (T::one() - ab_p).sqrt();
    Tensor::new(
        x_t.shape(),
        x_t.data()
            .iter()
            .zip(eps_hat.data())
            .map(|(&x, &e)| {
                let x0_hat = (x - sb_t * e) / sa_t;
                sa_p * x0_hat + sb_p * e
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_normal, seeded_rng};

    #[test]
    fn monotone_and_bounded() {
        let sc = NoiseSchedule::<f64>::linear(1000);
        assert!((sc.alpha_bar(0) - 1.0).abs() < 1e-12);
        for t in 1..=1000 {
            assert!(sc.alpha_bar(t) < sc.alpha_bar(t - 1));
            assert!(sc.alpha_bar(t) > 0.0 && sc.alpha_bar(t) < 1.0);
        }
        // near-identity at t=1
        assert!(sc.alpha_bar(1) > 0.999);
        // terminal alpha_bar below 1e-4 for the default schedule
        assert!(sc.alpha_bar(1000) < 1e-4, "{}", sc.alpha_bar(1000));
    }

    #[test]
    fn forward_diffuse_limits() {
        let sc = NoiseSchedule::<f64>::linear(1000);
        let x0 = Tensor::new(&[4], vec![0.1, -0.4, 0.9, 0.0]);
        let zero = Tensor::zeros(&[4]);
        // eps = 0 -> pure scaling
        let xt = sc.forward_diffuse(&x0, 500, &zero).unwrap();
        let sa = sc.alpha_bar(500).sqrt();
        for (a, b) in xt.data().iter().zip(x0.data()) {
            assert!((a - sa * b).abs() < 1e-12);
        }
        // t=1: x_t ≈ x0
        let mut rng = seeded_rng(1, "sched");
        let mut e = vec![0.0; 4];
        fill_normal(&mut rng, &mut e);
        let eps = Tensor::new(&[4], e);
        let xt = sc.forward_diffuse(&x0, 1, &eps).unwrap();
        for (a, b) in xt.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 0.02);
        }
        // t = T: dominated by eps
        let xt = sc.forward_diffuse(&x0, 1000, &eps).unwrap();
        for (a, e) in xt.data().iter().zip(eps.data()) {
            assert!((a - e).abs() < 0.01);
        }
        assert!(sc.forward_diffuse(&x0, 0, &eps).is_err());
        assert!(sc.forward_diffuse(&x0, 1001, &eps).is_err());
    }

    #[test]
    fn inversion_recovers_x0_at_random_timesteps() {
        let sc = NoiseSchedule::<f64>::linear(1000);
        let mut rng = seeded_rng(2, "sched-inv");
        let mut x = vec![0.0; 16];
        fill_normal(&mut rng, &mut x);
        let x0 = Tensor::new(&[16], x);
        for k in 0..10 {
            let t = 1 + (k * 97) % 1000;
            let mut e = vec![0.0; 16];
            fill_normal(&mut rng, &mut e);
            let eps = Tensor::new(&[16], e);
            let xt = sc.forward_diffuse(&x0, t, &eps).unwrap();
            let rec = sc.invert_diffuse(&xt, t, &eps).unwrap();
            for (a, b) in rec.data().iter().zip(x0.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ddim_step_identity_and_exact_inversion() {
        let sc = NoiseSchedule::<f64>::linear(1000);
        let x0 = Tensor::new(&[4], vec![0.3, -0.2, 0.5, 0.8]);
        let eps = Tensor::new(&[4], vec![0.7, -1.1, 0.2, -0.3]);
        let t = 400;
        let xt = sc.forward_diffuse(&x0, t, &eps).unwrap();
        // t_prev = t is the identity map
        let same = ddim_step(&sc, &xt, t, t, &eps);
        assert_eq!(same.data(), xt.data());
        // with the exact generating noise, stepping to 0 recovers x0
        let x_prev = ddim_step(&sc, &xt, t, 0, &eps);
        for (a, b) in x_prev.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_bar_table_roundtrip() {
        let sc = NoiseSchedule::<f32>::linear(100);
        let table = sc.alpha_bar_table_f64();
        let back = NoiseSchedule::<f32>::from_alpha_bar(&table).unwrap();
        assert_eq!(sc.alpha_bar, back.alpha_bar);
    }
}
