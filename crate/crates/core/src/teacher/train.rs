//! Teacher training: standard ε-prediction objective on multi-view data.

use crate::config::RunConfig;
use crate::error::{DdError, Result};
use crate::nn::{Graph, ParamStore};
use crate::rng::{fill_normal, seeded_rng};
use crate::tensor::Tensor;
use crate::trainer::Adam;

use super::schedule::NoiseSchedule;
use super::{TeacherConfig, TeacherModel};

/// One training record: conditioning image, clean target views, and the
/// Plücker maps of the (fixed-ring) target cameras.
#[derive(Clone, Debug)]
pub struct TeacherSample {
    /// `[3, H, W]`
    pub ii: Tensor<f32>,
    /// `[views, 3, H, W]` clean views (x0)
    pub x0: Tensor<f32>,
    /// `[views, 6, H, W]`
    pub plucker: Tensor<f32>,
}

pub struct TeacherTrainResult {
    pub model: TeacherModel,
    pub store: ParamStore<f32>,
    pub schedule: NoiseSchedule<f32>,
    pub losses: Vec<f32>,
    pub val_losses: Vec<(usize, f32)>,
}

/// ε-MSE on a batch without touching weights (validation).
fn eval_eps_mse(
    model: &TeacherModel,
    store: &ParamStore<f32>,
    schedule: &NoiseSchedule<f32>,
    samples: &[TeacherSample],
    seed: u64,
) -> Result<f32> {
    let mut rng = seeded_rng(seed, "teacher-val");
    let mut total = 0.0f32;
    for sample in samples {
        let t = 1 + (rng.next_u64() as usize) % schedule.timesteps();
        let mut eps = vec![0.0f32; sample.x0.len()];
        fill_normal(&mut rng, &mut eps);
        let eps = Tensor::new(sample.x0.shape(), eps);
        let x_t = schedule.forward_diffuse(&sample.x0, t, &eps)?;
        let views = sample.x0.shape()[0];
        let mut g = Graph::inference();
        let x = g.constant(x_t);
        let pl = g.constant(sample.plucker.clone());
        let ii = g.constant(sample.ii.clone().reshaped(&[1, 3, sample.ii.shape()[1], sample.ii.shape()[2]]));
        let ii_tokens = model.encode_ii(&mut g, store, ii);
        let out = model.forward(&mut g, store, x, &[t], pl, ii_tokens, views)?;
        let pred = g.value(out);
        let mut mse = 0.0f32;
        for (p, e) in pred.data().iter().zip(eps.data()) {
            let d = p - e;
            mse += d * d;
        }
        total += mse / eps.len() as f32;
    }
    Ok(total / samples.len() as f32)
}

use rand::RngCore;

/// Train a fresh teacher. Deterministic for a given `(samples, cfg, seed)`.
pub fn train_teacher(
    samples: &[TeacherSample],
    val: &[TeacherSample],
    cfg: &RunConfig,
    seed: u64,
) -> Result<TeacherTrainResult> {
    if samples.is_empty() {
        return Err(DdError::Invariant("empty teacher dataset".into()));
    }
    let tcfg = TeacherConfig::from_run(cfg);
    let schedule = NoiseSchedule::<f32>::linear(cfg.timesteps);
    let mut store = ParamStore::new();
    let mut init_rng = seeded_rng(seed, "teacher-init");
    let model = TeacherModel::new(&mut store, tcfg, &mut init_rng);
    let mut opt = Adam::new(&store, cfg.teacher_lr);

    let mut batch_rng = seeded_rng(seed, "teacher-batches");
    let mut t_rng = seeded_rng(seed, "teacher-t");
    let mut eps_rng = seeded_rng(seed, "teacher-eps");

    let mut losses = Vec::with_capacity(cfg.teacher_steps);
    let mut val_losses = Vec::new();
    let val_every = (cfg.teacher_steps / 10).max(1);

    for step in 0..cfg.teacher_steps {
        store.zero_grad();
        let mut step_loss = 0.0f32;
        let batch = cfg.teacher_batch.max(1);
        for _ in 0..batch {
            let sample = &samples[(batch_rng.next_u64() as usize) % samples.len()];
            let views = sample.x0.shape()[0];
            let t = 1 + (t_rng.next_u64() as usize) % schedule.timesteps();
            let mut eps = vec![0.0f32; sample.x0.len()];
            fill_normal(&mut eps_rng, &mut eps);
            let eps = Tensor::new(sample.x0.shape(), eps);
            let x_t = schedule.forward_diffuse(&sample.x0, t, &eps)?;

            let mut g = Graph::new();
            let x = g.constant(x_t);
            let pl = g.constant(sample.plucker.clone());
            let (h, w) = (sample.ii.shape()[1], sample.ii.shape()[2]);
            let ii = g.constant(sample.ii.clone().reshaped(&[1, 3, h, w]));
            let ii_tokens = model.encode_ii(&mut g, &store, ii);
            let out = model.forward(&mut g, &store, x, &[t], pl, ii_tokens, views)?;
            let target = g.constant(eps);
            let diff = g.sub(out, target);
            let sq = g.mul(diff, diff);
            let loss = g.mean_all(sq);
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(DdError::Numeric(format!(
                    "teacher loss diverged at step {step} (t={t})"
                )));
            }
            step_loss += lv;
            let grads = g.backward_scalar(loss);
            g.accumulate_param_grads(&grads, &mut store);
        }
        step_loss /= batch as f32;
        losses.push(step_loss);
        opt.step(&mut store, cfg.grad_clip as f32);

        if !val.is_empty() && (step + 1) % val_every == 0 {
            let v = eval_eps_mse(&model, &store, &schedule, val, seed ^ 0x5a5a)?;
            val_losses.push((step + 1, v));
        }
    }
    Ok(TeacherTrainResult { model, store, schedule, losses, val_losses })
}

/// Untrained-baseline ε-MSE (the unit-variance floor a zero predictor hits).
pub fn untrained_eps_mse(
    model: &TeacherModel,
    store: &ParamStore<f32>,
    schedule: &NoiseSchedule<f32>,
    samples: &[TeacherSample],
    seed: u64,
) -> Result<f32> {
    eval_eps_mse(model, store, schedule, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{orbit_camera, plucker_embed};

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.render_size = 8;
        cfg.n_views = 2;
        cfg.teacher_channels = 8;
        cfg.teacher_token_dim = 16;
        cfg.attn_heads = 2;
        cfg.teacher_steps = 40;
        cfg.teacher_batch = 1;
        cfg.teacher_lr = 1e-3;
        cfg.timesteps = 100;
        cfg.ddim_steps = 50;
        cfg
    }

    fn tiny_samples(cfg: &RunConfig, count: usize) -> Vec<TeacherSample> {
        let mut rng = seeded_rng(77, "teacher-test-data");
        let hw = cfg.render_size;
        let mut pl = Vec::new();
        for v in 0..cfg.n_views {
            let cam = orbit_camera(
                v as f32 * 180.0 - 90.0,
                0.0,
                2.0f32,
                60.0,
                hw,
                hw,
            )
            .unwrap();
            pl.push(plucker_embed(&cam));
        }
        let mut plucker = Vec::new();
        for p in &pl {
            plucker.extend_from_slice(p.data());
        }
        let plucker = Tensor::new(&[cfg.n_views, 6, hw, hw], plucker);
        (0..count)
            .map(|_| {
                let base: f32 = crate::rng::draw_range(&mut rng, 0.2, 0.8);
                let ii = Tensor::full(&[3, hw, hw], base);
                let x0 = Tensor::full(&[cfg.n_views, 3, hw, hw], base);
                TeacherSample { ii, x0, plucker: plucker.clone() }
            })
            .collect()
    }

    #[test]
    fn loss_decreases_and_training_is_deterministic() {
        let cfg = tiny_cfg();
        let samples = tiny_samples(&cfg, 4);
        let r1 = train_teacher(&samples, &samples, &cfg, 3).unwrap();
        let early: f32 = r1.losses[..5].iter().sum::<f32>() / 5.0;
        let late: f32 = r1.losses[r1.losses.len() - 5..].iter().sum::<f32>() / 5.0;
        assert!(late < early, "teacher loss did not decrease: {early} -> {late}");

        let r2 = train_teacher(&samples, &samples, &cfg, 3).unwrap();
        for (id1, id2) in r1.store.ids().zip(r2.store.ids()) {
            let a = r1.store.value(id1).data();
            let b = r2.store.value(id2).data();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        // different seed -> different weights
        let r3 = train_teacher(&samples, &samples, &cfg, 4).unwrap();
        let w1 = r1.store.value(r1.store.ids().next().unwrap()).data()[0];
        let w3 = r3.store.value(r3.store.ids().next().unwrap()).data()[0];
        assert_ne!(w1.to_bits(), w3.to_bits());
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_predictions() {
        let cfg = tiny_cfg();
        let samples = tiny_samples(&cfg, 2);
        let mut cfg_short = cfg.clone();
        cfg_short.teacher_steps = 5;
        let r = train_teacher(&samples, &[], &cfg_short, 9).unwrap();
        let ck = super::super::teacher_checkpoint(&r.store, &r.model.cfg, &r.schedule, 9).unwrap();
        let bytes = ck.to_bytes().unwrap();
        let ck2 = crate::checkpoint::Checkpoint::from_bytes(&bytes).unwrap();
        let (model2, store2, schedule2) = super::super::teacher_from_checkpoint(&ck2).unwrap();
        let v1 = eval_eps_mse(&r.model, &r.store, &r.schedule, &samples, 42).unwrap();
        let v2 = eval_eps_mse(&model2, &store2, &schedule2, &samples, 42).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }
}
